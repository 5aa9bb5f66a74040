#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pipeline/windows.hpp"
#include "transport/recording.hpp"

namespace pif::pipeline {

struct ClosedWindow {
    LabeledWindow labeled;
    std::string subject;
    std::optional<std::string> truth; // TRUTH marker payload, if any
};

// Incremental story windowing over a .pifrec line stream. A window is
// released once its END (or the next STORY) marker has arrived and every
// signal stream has delivered a sample at or past the window's end, so the
// streams may arrive interleaved in any order.
class WindowStream {
public:
    explicit WindowStream(StreamNames names = {});

    // One complete record (without the newline). Throws Corrupt on records
    // that do not parse or violate the format.
    std::vector<ClosedWindow> feed_line(const std::string &line);
    // Splits `data` into lines, keeping a trailing partial line for later.
    std::vector<ClosedWindow> feed(const std::string &data);
    // End of input: every window still open closes at the last timestamp.
    std::vector<ClosedWindow> finish();

private:
    struct Pending {
        std::string story;
        std::optional<std::string> label, truth;
        double t0 = 0.0;
        std::optional<double> t1;
    };
    std::vector<ClosedWindow> release(bool all);
    void on_marker(const transport::Sample &m);

    StreamNames names_;
    bool have_header_ = false;
    std::string partial_;
    std::size_t line_no_ = 0;
    transport::Recording meta_; // header and stream declarations only
    std::map<std::size_t, Signal> signal_of_;
    std::map<std::size_t, std::vector<transport::Sample>> buf_;
    std::map<std::size_t, double> last_t_;
    std::vector<Pending> pending_;
    std::string subject_;
    double floor_ = -1e300; // samples before this belong to no window
    double t_max_ = 0.0;
    bool finished_ = false;
};

} // namespace pif::pipeline
