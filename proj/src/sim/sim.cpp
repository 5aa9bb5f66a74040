#include "sim/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <mutex>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include "common/error.hpp"
#include "json.hpp"
#include "pipeline/windows.hpp"

namespace pif::sim {

using transport::Recording;
using transport::Sample;
using transport::StreamInfo;
using transport::StreamKind;

void Scenario::validate() const
{
    if (segments.empty())
        throw validation_error("scenario has no segments");
    if (!(gap >= 0))
        throw validation_error("scenario gap must be >= 0");
    for (const Segment &s : segments) {
        if (s.story.empty())
            throw validation_error("scenario segment without a story name");
        if (!(s.duration > 0))
            throw validation_error("segment " + s.story + ": duration must be > 0");
        for (double v : {s.truth.arousal, s.truth.valence, s.truth.difficulty})
            if (!(v >= 0 && v <= 1))
                throw validation_error("segment " + s.story + ": ground truth outside [0, 1]");
    }
}

double Scenario::total_duration() const
{
    double t = gap;
    for (const Segment &s : segments)
        t += s.duration + gap;
    return t;
}

Scenario paired_stories(double separability)
{
    if (!(separability >= 0 && separability <= 1))
        throw invalid_argument("separability must be in [0, 1]");
    double lo = 0.5 - 0.4 * separability, hi = 0.5 + 0.4 * separability;
    Scenario s;
    auto add = [&](const char *name, Truth t) { s.segments.push_back({name, name, 70.0, t, {}}); };
    add("boring", {lo, 0.5, 0.5});
    add("exciting", {hi, 0.5, 0.5});
    add("complicated", {0.5, 0.5, hi});
    add("simple", {0.5, 0.5, lo});
    add("happy", {0.5, hi, 0.5});
    add("sad", {0.5, lo, 0.5});
    return s;
}

const std::vector<ConstructDef> &paired_constructs()
{
    static const std::vector<ConstructDef> defs{
        {"arousal", "exciting", "boring"},
        {"difficulty", "complicated", "simple"},
        {"valence", "happy", "sad"},
    };
    return defs;
}

std::map<std::string, int> planted_associations(const std::string &construct)
{
    // Signs relative to class A, the high pole of each construct: exciting,
    // complicated, happy.
    if (construct == "arousal")
        return {{"eda_n_peaks", 1}, {"eda_mean_smna", 1}, {"pupil_mean", 1}};
    if (construct == "difficulty")
        return {{"mind_wandering_total", 1}, {"mean_fixation_dur", 1}, {"n_fixations", -1},
                {"n_saccades", -1},          {"n_split_saccades", -1}};
    if (construct == "valence")
        // Rate jitter is fixed in bpm, so faster breathing also shortens the
        // spread of cycle durations.
        return {{"breath_rate", 1},      {"breath_rate_int", 1},  {"head_travel", 1},
                {"head_mean_speed", 1},  {"breath_rmssd", -1},    {"breath_rmssd_int", -1}};
    throw invalid_argument("unknown construct '" + construct + "'");
}

std::string scenario_to_json(const Scenario &s)
{
    nlohmann::json segs = nlohmann::json::array();
    for (const Segment &g : s.segments)
        segs.push_back({{"story", g.story},
                        {"label", g.label},
                        {"duration", g.duration},
                        {"truth", {{"arousal", g.truth.arousal}, {"valence", g.truth.valence}, {"difficulty", g.truth.difficulty}}},
                        {"tags", g.tags}});
    return nlohmann::json{{"gap", s.gap}, {"segments", segs}}.dump(1);
}

Scenario scenario_from_json(const std::string &text)
{
    try {
        auto j = nlohmann::json::parse(text);
        Scenario s;
        s.gap = j.value("gap", 5.0);
        for (const auto &g : j.at("segments")) {
            Segment seg;
            seg.story = g.at("story").get<std::string>();
            seg.label = g.value("label", seg.story);
            seg.duration = g.value("duration", 70.0);
            if (g.contains("truth")) {
                const auto &t = g["truth"];
                seg.truth = {t.value("arousal", 0.5), t.value("valence", 0.5), t.value("difficulty", 0.5)};
            }
            seg.tags = g.value("tags", std::vector<std::string>{});
            s.segments.push_back(seg);
        }
        s.validate();
        return s;
    } catch (const nlohmann::json::exception &e) {
        throw validation_error(std::string("scenario: ") + e.what());
    }
}

SubjectProfile random_profile(const std::string &id, std::uint64_t seed)
{
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 17);
    auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    SubjectProfile p;
    p.id = id;
    p.seed = seed;
    p.breath_rate = u(12.5, 16.5);
    p.breath_gain = u(4.0, 6.0);
    p.eda_level = u(2.5, 7.5);
    p.scr_rate = u(0.5, 1.5);
    p.scr_gain = u(8.0, 12.0);
    p.scr_amp = u(0.15, 0.45);
    p.pupil_base = u(0.8, 1.2);
    p.pupil_gain = u(0.10, 0.20);
    p.fix_dur = u(0.18, 0.28);
    p.fix_gain = u(0.08, 0.14);
    p.blink_rate = u(8.0, 16.0);
    p.wander_rate = u(0.25, 0.75);
    p.wander_gain = u(3.0, 5.0);
    p.head_speed = u(0.025, 0.075);
    p.head_gain = u(0.6, 1.0);
    return p;
}

// Generation ------------------------------------------------------------------------

namespace {

struct Timeline {
    const Scenario &sc;
    std::vector<double> starts;

    explicit Timeline(const Scenario &s) : sc(s)
    {
        double t = s.gap;
        for (const Segment &g : s.segments) {
            starts.push_back(t);
            t += g.duration + s.gap;
        }
    }

    Truth at(double t) const
    {
        for (std::size_t i = 0; i < starts.size(); ++i)
            if (t >= starts[i] && t < starts[i] + sc.segments[i].duration)
                return sc.segments[i].truth;
        return {};
    }
};

// Economy pink-noise filter (three leaky integrators over white noise).
class Pink {
public:
    double next(double white)
    {
        b0_ = 0.99765 * b0_ + white * 0.0990460;
        b1_ = 0.96300 * b1_ + white * 0.2965164;
        b2_ = 0.57000 * b2_ + white * 1.0526913;
        return (b0_ + b1_ + b2_ + white * 0.1848) * 0.25;
    }

private:
    double b0_ = 0, b1_ = 0, b2_ = 0;
};

// Ornstein-Uhlenbeck step with unit stationary variance.
double ou_step(double x, double dt, double tau, double white)
{
    double a = std::exp(-dt / tau);
    return a * x + std::sqrt(1 - a * a) * white;
}

struct Streams {
    std::vector<Sample> eda, breathing, gaze, head, truth, markers;
};

void gen_breathing(const SubjectProfile &p, const Timeline &tl, double T, std::mt19937_64 &rng, Streams &out)
{
    std::normal_distribution<double> z(0, 1);
    auto n = static_cast<std::size_t>(T * kSignalRate);
    double dt = 1.0 / kSignalRate, phase = 0, jitter = 0;
    Pink pink;
    out.breathing.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        double t = static_cast<double>(i) * dt;
        jitter = ou_step(jitter, dt, 10.0, z(rng));
        double bpm = p.breath_rate + p.breath_gain * (tl.at(t).valence - 0.5) + p.breath_jitter * jitter;
        phase += 2 * M_PI * std::max(bpm, 1.0) / 60.0 * dt;
        double v = p.breath_amp * (std::sin(phase) + p.breath_noise * pink.next(z(rng)));
        out.breathing.push_back(Sample::signal(t, {v}));
    }
}

void gen_eda(const SubjectProfile &p, const Timeline &tl, double T, std::mt19937_64 &rng, Streams &out)
{
    std::normal_distribution<double> z(0, 1);
    std::uniform_real_distribution<double> u(0, 1);
    auto n = static_cast<std::size_t>(T * kSignalRate);
    double dt = 1.0 / kSignalRate;
    std::vector<double> x(n);
    double level = p.eda_level;
    for (std::size_t i = 0; i < n; ++i) {
        level += p.eda_walk * std::sqrt(dt) * z(rng);
        x[i] = level;
    }
    // Inhomogeneous Poisson onsets by thinning, with a refractory period.
    double max_rate = (p.scr_rate + p.scr_gain) / 60.0;
    std::vector<double> kernel = features::scr_kernel(kSignalRate, 0.7, 2.0, 20.0);
    double t = 0, last = -1e9;
    while (true) {
        t += -std::log(1 - u(rng)) / max_rate;
        if (t >= T)
            break;
        double rate = (p.scr_rate + p.scr_gain * tl.at(t).arousal) / 60.0;
        if (u(rng) * max_rate > rate || t - last < p.scr_refractory)
            continue;
        last = t;
        double amp = p.scr_amp * std::exp(0.3 * z(rng));
        auto i0 = static_cast<std::size_t>(std::ceil(t * kSignalRate));
        for (std::size_t k = 0; k < kernel.size() && i0 + k < n; ++k)
            x[i0 + k] += amp * kernel[k];
    }
    out.eda.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.eda.push_back(Sample::signal(static_cast<double>(i) * dt, {x[i]}));
}

struct Interval {
    double a, b;
};

bool inside(const std::vector<Interval> &v, double t)
{
    for (const Interval &i : v)
        if (t >= i.a && t < i.b)
            return true;
    return false;
}

void gen_gaze(const SubjectProfile &p, const Timeline &tl, double T, std::mt19937_64 &rng, Streams &out)
{
    std::normal_distribution<double> z(0, 1);
    std::uniform_real_distribution<double> u(0, 1);

    // Blinks: homogeneous Poisson; mind wandering: rate follows difficulty.
    std::vector<Interval> blinks, wander;
    for (double t = 0;;) {
        t += -std::log(1 - u(rng)) / (p.blink_rate / 60.0);
        if (t >= T)
            break;
        blinks.push_back({t, t + 0.1 + 0.2 * u(rng)});
    }
    double wmax = (p.wander_rate + p.wander_gain) / 60.0;
    for (double t = 0;;) {
        t += -std::log(1 - u(rng)) / wmax;
        if (t >= T)
            break;
        double rate = (p.wander_rate + p.wander_gain * tl.at(t).difficulty) / 60.0;
        if (u(rng) * wmax > rate)
            continue;
        double d = 0.7 + 1.3 * u(rng);
        wander.push_back({t, t + d});
        t += d;
    }

    // Reading path: fixations along lines, short forward saccades, return
    // sweeps at line ends.
    struct Move {
        double t0, t1; // fixation [t0, t1), then saccade to the next start
        double x, y;
    };
    std::vector<Move> path;
    double t = 0, x = 0.1, y = 0.1;
    while (t < T) {
        double mean = p.fix_dur + p.fix_gain * tl.at(t).difficulty;
        double d = std::gamma_distribution<double>(6.0, mean / 6.0)(rng);
        path.push_back({t, t + d, x, y});
        t += d;
        x += 0.07 + 0.015 * z(rng);
        double sac = 0.03;
        if (x > 0.9) {
            x = 0.1;
            y += 0.06;
            sac = 0.05;
            if (y > 0.9)
                y = 0.1;
        }
        t += sac;
    }

    double pupil_noise = 0;
    auto n = static_cast<std::size_t>(T * kGazeRate);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double ts = static_cast<double>(i) / kGazeRate;
        while (k + 1 < path.size() && path[k + 1].t0 <= ts)
            ++k;
        double gx, gy;
        const Move &m = path[k];
        if (ts < m.t1 || k + 1 >= path.size()) {
            gx = m.x + 0.0015 * z(rng);
            gy = m.y + 0.0015 * z(rng);
        } else {
            const Move &nx = path[k + 1];
            double f = (ts - m.t1) / (nx.t0 - m.t1);
            gx = m.x + f * (nx.x - m.x);
            gy = m.y + f * (nx.y - m.y);
        }
        pupil_noise = ou_step(pupil_noise, 1.0 / kGazeRate, 1.0, z(rng));
        double pupil = p.pupil_base * (1 + p.pupil_gain * (tl.at(ts).arousal - 0.5)) + p.pupil_noise * pupil_noise;
        double valid = 1;
        if (inside(blinks, ts)) {
            valid = 0;
            gx = gy = 0;
        } else if (inside(wander, ts)) {
            gx = 1.6 + 0.05 * z(rng);
            gy = 0.5 + 0.05 * z(rng);
        }
        out.gaze.push_back(Sample::signal(ts, {gx, gy, valid, valid ? pupil : 0.0}));
    }
}

void gen_head(const SubjectProfile &p, const Timeline &tl, double T, std::mt19937_64 &rng, Streams &out)
{
    std::normal_distribution<double> z(0, 1);
    auto n = static_cast<std::size_t>(T * kGazeRate);
    double dt = 1.0 / kGazeRate;
    double w[3] = {0, 0, 0};
    features::Quat q;
    for (std::size_t i = 0; i < n; ++i) {
        double t = static_cast<double>(i) * dt;
        out.head.push_back(Sample::signal(t, {q.w, q.x, q.y, q.z}));
        for (double &c : w)
            c = ou_step(c, dt, 1.0, z(rng));
        // Mean |omega| of a standard 3-D Gaussian is sqrt(8/pi).
        double speed = p.head_speed * std::max(0.0, 1 + p.head_gain * (tl.at(t).valence - 0.5)) / std::sqrt(8 / M_PI);
        double ax = w[0] * speed, ay = w[1] * speed, az = w[2] * speed;
        double mag = std::sqrt(ax * ax + ay * ay + az * az);
        if (mag > 0) {
            features::Quat step = features::Quat::axis_angle(ax, ay, az, mag * dt);
            q = q * step;
            double nq = q.norm();
            q = {q.w / nq, q.x / nq, q.y / nq, q.z / nq};
        }
    }
}

std::string fmt(double v)
{
    std::ostringstream os;
    os << v;
    return os.str();
}

} // namespace

Recording generate(const SubjectProfile &p, const Scenario &sc)
{
    sc.validate();
    Timeline tl(sc);
    double T = sc.total_duration();
    Streams s;
    // Independent generators per stream so that changing one model leaves
    // the others' draws untouched.
    std::mt19937_64 r_breath(p.seed * 4 + 0), r_eda(p.seed * 4 + 1), r_gaze(p.seed * 4 + 2), r_head(p.seed * 4 + 3);
    gen_breathing(p, tl, T, r_breath, s);
    gen_eda(p, tl, T, r_eda, s);
    gen_gaze(p, tl, T, r_gaze, s);
    gen_head(p, tl, T, r_head, s);
    for (std::size_t i = 0; i < static_cast<std::size_t>(T * kStateRate); ++i) {
        double t = static_cast<double>(i) / kStateRate;
        Truth g = tl.at(t);
        s.truth.push_back(Sample::signal(t, {g.arousal, g.valence, g.difficulty}));
    }
    s.markers.push_back(Sample::label(0.0, "SUBJECT:" + p.id));
    for (std::size_t i = 0; i < sc.segments.size(); ++i) {
        const Segment &g = sc.segments[i];
        double a = tl.starts[i], b = a + g.duration;
        s.markers.push_back(Sample::label(a, "STORY:" + g.story));
        s.markers.push_back(Sample::label(a, "LABEL:" + (g.label.empty() ? g.story : g.label)));
        s.markers.push_back(Sample::label(a, "TRUTH:arousal=" + fmt(g.truth.arousal) + ",valence=" +
                                                 fmt(g.truth.valence) + ",difficulty=" + fmt(g.truth.difficulty)));
        for (const std::string &tag : g.tags)
            s.markers.push_back(Sample::label(a, "TAG_START:" + tag));
        for (auto it = g.tags.rbegin(); it != g.tags.rend(); ++it)
            s.markers.push_back(Sample::label(b, "TAG_STOP:" + *it));
        s.markers.push_back(Sample::label(b, "END:" + g.story));
    }

    Recording rec;
    rec.header.wall_clock_start = "2000-01-01T00:00:00Z";
    rec.header.meta = {{"subject", p.id}, {"seed", std::to_string(p.seed)}, {"generator", "pif-sim"}};
    std::vector<std::pair<std::size_t, std::vector<Sample> *>> order;
    auto add = [&](StreamInfo info, std::vector<Sample> &v) { order.push_back({rec.add_stream(info.normalized()), &v}); };
    add({"eda", StreamKind::Signal, 1, kSignalRate, {"eda"}, "sim-" + p.id + "-eda"}, s.eda);
    add({"breathing", StreamKind::Signal, 1, kSignalRate, {"breathing"}, "sim-" + p.id + "-breathing"}, s.breathing);
    add({"gaze", StreamKind::Signal, 4, kGazeRate, {"x", "y", "valid", "pupil"}, "sim-" + p.id + "-gaze"}, s.gaze);
    add({"head", StreamKind::Signal, 4, kGazeRate, {"w", "x", "y", "z"}, "sim-" + p.id + "-head"}, s.head);
    add({"truth", StreamKind::Signal, 3, kStateRate, {"arousal", "valence", "difficulty"}, "sim-" + p.id + "-truth"},
        s.truth);
    add({"pif-markers", StreamKind::Marker, 1, 0, {}, "sim-" + p.id + "-markers"}, s.markers);

    // Interleave by timestamp as a live recorder would see them; ties keep
    // stream order.
    std::size_t total = 0;
    for (auto &[idx, v] : order)
        total += v->size();
    rec.samples.reserve(total);
    std::vector<std::size_t> pos(order.size(), 0);
    while (rec.samples.size() < total) {
        std::size_t best = order.size();
        for (std::size_t k = 0; k < order.size(); ++k)
            if (pos[k] < order[k].second->size() &&
                (best == order.size() || (*order[k].second)[pos[k]].timestamp < (*order[best].second)[pos[best]].timestamp))
                best = k;
        rec.samples.push_back({order[best].first, std::move((*order[best].second)[pos[best]++])});
    }
    return rec;
}

Cohort make_cohort(int n_subjects, const Scenario &scenario, std::uint64_t seed, bool parallel)
{
    std::vector<SubjectProfile> profiles;
    for (int i = 0; i < n_subjects; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "s%02d", i + 1);
        profiles.push_back(random_profile(id, seed + static_cast<std::uint64_t>(i)));
    }
    return make_cohort(std::move(profiles), scenario, parallel);
}

Cohort make_cohort(std::vector<SubjectProfile> profiles, const Scenario &scenario, bool parallel)
{
    if (profiles.size() < 3)
        throw invalid_argument("a cohort needs at least 3 subjects");
    scenario.validate();
    Cohort c;
    c.profiles = std::move(profiles);
    std::vector<std::vector<features::FeatureVector>> per(c.profiles.size());
    auto run = [&](std::size_t i) {
        const SubjectProfile &p = c.profiles[i];
        Scenario sc = scenario;
        std::mt19937_64 rng(p.seed ^ 0xC0FFEEULL);
        std::shuffle(sc.segments.begin(), sc.segments.end(), rng); // counterbalanced order
        per[i] = pipeline::extract_recording(generate(p, sc));
    };
    unsigned workers = parallel ? std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), 4)) : 1;
    if (workers == 1) {
        for (std::size_t i = 0; i < per.size(); ++i)
            run(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        std::exception_ptr err;
        std::mutex err_mu;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i; (i = next++) < per.size();) {
                    try {
                        run(i);
                    } catch (...) {
                        std::lock_guard lock(err_mu);
                        if (!err)
                            err = std::current_exception();
                    }
                }
            });
        for (auto &t : pool)
            t.join();
        if (err)
            std::rethrow_exception(err);
    }
    for (auto &v : per)
        for (auto &fv : v)
            c.rows.push_back(std::move(fv));
    return c;
}

} // namespace pif::sim
