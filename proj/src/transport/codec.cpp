#include "transport/codec.hpp"

#include <cmath>

namespace pif::transport {

json info_to_json(const StreamInfo &info)
{
    return json{{"name", info.name},
                {"kind", kind_name(info.kind)},
                {"channel_count", info.channel_count},
                {"nominal_rate", info.nominal_rate},
                {"channel_labels", info.channel_labels},
                {"source_id", info.source_id}};
}

StreamInfo info_from_json(const json &j)
{
    if (!j.is_object())
        throw validation_error("stream info is not an object");
    try {
        StreamInfo info;
        info.name = j.at("name").get<std::string>();
        info.kind = parse_kind(j.value("kind", "signal"));
        info.channel_count = j.value("channel_count", 1);
        info.nominal_rate = j.value("nominal_rate", 0.0);
        info.channel_labels = j.value("channel_labels", std::vector<std::string>{});
        info.source_id = j.value("source_id", std::string{});
        return info.normalized();
    } catch (const json::exception &e) {
        throw validation_error(std::string("bad stream info: ") + e.what());
    }
}

void sample_to_json(const Sample &s, json &out)
{
    out["t"] = s.timestamp;
    if (s.values.empty() && !s.marker.empty())
        out["v"] = s.marker;
    else if (s.values.empty())
        out["v"] = "";
    else
        out["v"] = s.values;
}

Sample sample_from_json(const json &j, const StreamInfo &info)
{
    const json &t = j.at("t");
    const json &v = j.at("v");
    if (!t.is_number())
        throw validation_error("sample timestamp is not a number");
    Sample s;
    s.timestamp = t.get<double>();
    if (info.kind == StreamKind::Marker) {
        if (!v.is_string())
            throw validation_error("marker sample without a string label");
        s.marker = v.get<std::string>();
    } else {
        if (!v.is_array())
            throw validation_error("signal sample without a value array");
        for (const json &x : v) {
            if (!x.is_number())
                throw validation_error("non-numeric sample value");
            s.values.push_back(x.get<double>());
        }
    }
    check_sample(info, s, std::nullopt);
    return s;
}

double quantize_timestamp(double t)
{
    return std::round(t * 1e6) / 1e6;
}

} // namespace pif::transport
