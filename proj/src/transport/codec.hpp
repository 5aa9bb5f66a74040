#pragma once

#include "json.hpp"
#include "transport/stream.hpp"

namespace pif::transport {

using json = nlohmann::json;

json info_to_json(const StreamInfo &info);
StreamInfo info_from_json(const json &j);

// Sample payload: {"t": ..., "v": [numbers] | "label"}.
void sample_to_json(const Sample &s, json &out);
Sample sample_from_json(const json &j, const StreamInfo &info);

// Rounds to the recording's timestamp quantum (1 µs).
double quantize_timestamp(double t);

} // namespace pif::transport
