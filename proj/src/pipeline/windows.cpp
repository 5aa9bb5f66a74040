#include "pipeline/windows.hpp"

#include <algorithm>

namespace pif::pipeline {

using transport::Recording;
using transport::Sample;

namespace {

// Samples of one stream with timestamp in [t0, t1); samples are time-ordered.
std::pair<std::size_t, std::size_t> span(const std::vector<Sample> &v, double t0, double t1)
{
    auto lo = std::lower_bound(v.begin(), v.end(), t0, [](const Sample &s, double t) { return s.timestamp < t; });
    auto hi = std::lower_bound(lo, v.end(), t1, [](const Sample &s, double t) { return s.timestamp < t; });
    return {static_cast<std::size_t>(lo - v.begin()), static_cast<std::size_t>(hi - v.begin())};
}

std::vector<Sample> stream_or_empty(const Recording &rec, const std::string &name)
{
    if (!rec.stream_index(name))
        return {};
    return rec.samples_of(name);
}

double rate_of(const Recording &rec, const std::string &name)
{
    auto i = rec.stream_index(name);
    return i ? rec.streams[*i].nominal_rate : 0.0;
}

} // namespace

void append_sample(features::PhysioWindow &w, Signal which, const Sample &s)
{
    const auto &v = s.values;
    switch (which) {
    case Signal::Eda:
        if (!v.empty())
            w.eda.push_back(v[0]);
        break;
    case Signal::Breathing:
        if (!v.empty())
            w.breathing.push_back(v[0]);
        break;
    case Signal::Gaze:
        if (v.size() >= 4)
            w.gaze.push_back({s.timestamp, v[2] > 0.5 && features::within_display(v[0], v[1]), v[0], v[1], v[3]});
        break;
    case Signal::Head:
        if (v.size() >= 4)
            w.head.push_back({s.timestamp, {v[0], v[1], v[2], v[3]}});
        break;
    }
}

std::vector<LabeledWindow> story_windows(const Recording &rec, const StreamNames &names)
{
    std::vector<Sample> markers = stream_or_empty(rec, names.markers);
    double t_end = 0;
    for (const auto &rs : rec.samples)
        t_end = std::max(t_end, rs.sample.timestamp);

    struct Open {
        std::string story;
        double t0;
        std::optional<std::string> label;
    };
    std::vector<std::tuple<std::string, double, double, std::optional<std::string>>> spans;
    std::optional<Open> cur;
    auto close = [&](double t) {
        if (cur && t > cur->t0)
            spans.emplace_back(cur->story, cur->t0, t, cur->label);
        cur.reset();
    };
    for (const Sample &m : markers) {
        const std::string &l = m.marker;
        if (l.rfind("STORY:", 0) == 0) {
            close(m.timestamp);
            cur = Open{l.substr(6), m.timestamp, std::nullopt};
        } else if (l.rfind("END:", 0) == 0) {
            if (cur && cur->story == l.substr(4))
                close(m.timestamp);
        } else if (l.rfind("LABEL:", 0) == 0 && cur) {
            cur->label = l.substr(6);
        }
    }
    close(t_end + 1e-9);

    std::vector<Sample> eda = stream_or_empty(rec, names.eda), breathing = stream_or_empty(rec, names.breathing),
                        gaze = stream_or_empty(rec, names.gaze), head = stream_or_empty(rec, names.head);
    double eda_rate = rate_of(rec, names.eda), breathing_rate = rate_of(rec, names.breathing);

    std::vector<LabeledWindow> out;
    for (const auto &[story, t0, t1, label] : spans) {
        LabeledWindow w;
        w.story = story;
        w.label = label ? label : std::optional<std::string>(story);
        w.window.t0 = t0;
        w.window.t1 = t1;
        w.window.eda_rate = eda_rate > 0 ? eda_rate : 512.0;
        w.window.breathing_rate = breathing_rate > 0 ? breathing_rate : 512.0;
        auto add = [&](const std::vector<Sample> &v, Signal which) {
            auto [a, b] = span(v, t0, t1);
            for (std::size_t i = a; i < b; ++i)
                append_sample(w.window, which, v[i]);
        };
        add(eda, Signal::Eda);
        add(breathing, Signal::Breathing);
        add(gaze, Signal::Gaze);
        add(head, Signal::Head);
        out.push_back(std::move(w));
    }
    return out;
}

std::vector<features::FeatureVector> extract_recording(const Recording &rec, const features::ExtractOptions &opt,
                                                       const StreamNames &names)
{
    std::string subject;
    if (auto it = rec.header.meta.find("subject"); it != rec.header.meta.end())
        subject = it->second;
    if (subject.empty())
        for (const Sample &m : stream_or_empty(rec, names.markers))
            if (m.marker.rfind("SUBJECT:", 0) == 0) {
                subject = m.marker.substr(8);
                break;
            }
    std::vector<features::FeatureVector> out;
    for (const LabeledWindow &w : story_windows(rec, names)) {
        features::FeatureVector fv = features::extract(w.window, opt);
        fv.subject = subject;
        fv.label = w.label;
        fv.story = w.story;
        out.push_back(std::move(fv));
    }
    return out;
}

} // namespace pif::pipeline
