#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "common/error.hpp"
#include "features/features.hpp"

namespace pif::features {

const std::vector<std::string> &default_registry()
{
    static const std::vector<std::string> names{
        "n_blinks",        "mean_blink_dur",   "mind_wandering_total", "n_fixations",      "mean_fixation_dur",
        "n_saccades",      "mean_saccade_len", "mean_saccade_angle",   "n_split_saccades", "mean_split_saccade_len",
        "pupil_mean",      "pupil_sd",         "head_travel",          "head_mean_speed",  "eda_n_peaks",
        "eda_mean_peak_amp", "eda_mean_smna",  "breath_rate",          "breath_rmssd",     "breath_rate_int",
        "breath_rmssd_int", "reading_duration",
    };
    return names;
}

Missing FeatureVector::get(const std::string &name) const
{
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name)
            return values[i];
    throw invalid_argument("no feature named '" + name + "'");
}

bool FeatureVector::complete() const
{
    for (const Missing &v : values)
        if (!v)
            return false;
    return true;
}

namespace {

constexpr double kMinEdaSeconds = 10.0;
constexpr double kMinBreathSeconds = 20.0;

} // namespace

FeatureVector extract(const PhysioWindow &w, const ExtractOptions &opt)
{
    FeatureVector fv;
    fv.names = default_registry();
    fv.values.assign(fv.names.size(), std::nullopt);
    fv.t0 = w.t0;
    fv.t1 = w.t1;
    auto set = [&](const char *name, Missing v) {
        for (std::size_t i = 0; i < fv.names.size(); ++i)
            if (fv.names[i] == name) {
                fv.values[i] = v && std::isfinite(*v) ? v : std::nullopt;
                return;
            }
    };

    if (!w.gaze.empty()) {
        BlinkStats b = detect_blinks(w.gaze);
        set("n_blinks", b.count);
        set("mean_blink_dur", b.mean_duration);
        set("mind_wandering_total", mind_wandering(w.gaze));
        FixSacStats f = fixations_saccades(w.gaze, opt.idt);
        set("n_fixations", f.n_fixations);
        set("mean_fixation_dur", f.mean_fixation_dur);
        set("n_saccades", f.n_saccades);
        set("mean_saccade_len", f.mean_saccade_len);
        set("mean_saccade_angle", f.mean_saccade_angle);
        set("n_split_saccades", f.n_split_saccades);
        set("mean_split_saccade_len", f.mean_split_saccade_len);
        PupilStats p = pupil_stats(w.gaze);
        set("pupil_mean", p.mean);
        set("pupil_sd", p.sd);
    }
    if (w.head.size() >= 2) {
        HeadStats h = head_motion(w.head);
        set("head_travel", h.travel);
        set("head_mean_speed", h.mean_speed);
    }
    if (static_cast<double>(w.eda.size()) >= kMinEdaSeconds * w.eda_rate) {
        EdaStats e = eda_features(w.eda, w.eda_rate, opt.eda);
        set("eda_n_peaks", e.n_peaks);
        set("eda_mean_peak_amp", e.mean_peak_amp);
        set("eda_mean_smna", e.mean_smna);
    }
    if (static_cast<double>(w.breathing.size()) >= kMinBreathSeconds * w.breathing_rate) {
        BreathStats b = breathing_features(w.breathing, w.breathing_rate, opt.breath);
        set("breath_rate", b.rate_bpm);
        set("breath_rmssd", b.rmssd);
        set("breath_rate_int", b.rate_bpm_int);
        set("breath_rmssd_int", b.rmssd_int);
    }
    if (w.t1 > w.t0)
        set("reading_duration", w.t1 - w.t0);
    return fv;
}

// CSV ---------------------------------------------------------------------------

namespace {

std::string fmt(double v)
{
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

void check_field(const std::string &s)
{
    if (s.find_first_of(",\n\r\"") != std::string::npos)
        throw invalid_argument("CSV field contains a separator: '" + s + "'");
}

std::vector<std::string> split(const std::string &line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string &s, std::size_t line)
{
    double v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw validation_error("line " + std::to_string(line) + ": bad number '" + s + "'");
    return v;
}

const char *kTrailer[] = {"subject", "label", "story", "t0", "t1"};

} // namespace

void write_feature_csv(std::ostream &out, const std::vector<FeatureVector> &rows)
{
    const std::vector<std::string> &names = rows.empty() ? default_registry() : rows.front().names;
    for (const std::string &n : names)
        out << n << ',';
    out << "subject,label,story,t0,t1\n";
    for (const FeatureVector &fv : rows) {
        if (fv.names != names)
            throw invalid_argument("feature rows use different registries");
        for (const Missing &v : fv.values)
            out << (v ? fmt(*v) : "NA") << ',';
        check_field(fv.subject);
        check_field(fv.label.value_or(""));
        check_field(fv.story);
        out << fv.subject << ',' << fv.label.value_or("") << ',' << fv.story << ',' << fmt(fv.t0) << ','
            << fmt(fv.t1) << '\n';
    }
}

std::vector<FeatureVector> read_feature_csv(std::istream &in)
{
    std::string line;
    if (!std::getline(in, line))
        throw validation_error("empty feature table");
    std::vector<std::string> header = split(line);
    if (header.size() < 5)
        throw validation_error("feature table header too short");
    for (std::size_t i = 0; i < 5; ++i)
        if (header[header.size() - 5 + i] != kTrailer[i])
            throw validation_error("feature table header must end with subject,label,story,t0,t1");
    std::vector<std::string> names(header.begin(), header.end() - 5);
    std::vector<FeatureVector> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r")
            continue;
        std::vector<std::string> f = split(line);
        if (f.size() != header.size())
            throw validation_error("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                   " fields, got " + std::to_string(f.size()));
        FeatureVector fv;
        fv.names = names;
        for (std::size_t i = 0; i < names.size(); ++i)
            fv.values.push_back(f[i] == "NA" || f[i].empty() ? Missing{} : Missing{parse_double(f[i], line_no)});
        std::size_t b = names.size();
        fv.subject = f[b];
        if (!f[b + 1].empty())
            fv.label = f[b + 1];
        fv.story = f[b + 2];
        fv.t0 = parse_double(f[b + 3], line_no);
        fv.t1 = parse_double(f[b + 4], line_no);
        rows.push_back(std::move(fv));
    }
    return rows;
}

} // namespace pif::features
