// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
// Every expected value here comes from a construction whose answer is known
// in closed form (a sinusoid's period, a planted rank, an injected response
// count, a brute-force mean) rather than from the implementation.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "classify/classify.hpp"
#include "common/error.hpp"
#include "director/director.hpp"
#include "features/features.hpp"
#include "json.hpp"
#include "session/session.hpp"
#include "sim/sim.hpp"
#include "story/graph.hpp"
#include "transport/clock.hpp"
#include "transport/net.hpp"
#include "transport/recording.hpp"

using namespace pif;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    // Records a sub-check; failed ones are marked in the detail text.
    void check(bool ok, const std::string &what)
    {
        pass = pass && ok;
        if (detail.tellp() > 0)
            detail << "; ";
        detail << (ok ? "" : "!") << what;
    }
};

std::string fmt(double v, int prec = 4)
{
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path &p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string &name)
{
    fs::path dir = fs::temp_directory_path() / ("pif_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    return dir / name;
}

// Parser / lint ---------------------------------------------------------------------

std::vector<fs::path> stories(const fs::path &dir)
{
    std::vector<fs::path> out;
    for (const auto &e : fs::directory_iterator(dir))
        if (e.path().extension() == ".pif")
            out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

void parser_lint(Outcome &o, const fs::path &corpus)
{
    auto t0 = Clock::now();
    auto valid = stories(corpus / "valid");
    int clean = 0;
    bool nested = false, automatic = false;
    for (const auto &f : valid) {
        std::string text = slurp(f);
        int depth = 0;
        std::istringstream lines(text);
        for (std::string l; std::getline(lines, l);) {
            if (l.rfind("##", 0) != 0)
                continue;
            depth += l.find("_START") != std::string::npos ? 1 : l.find("_STOP") != std::string::npos ? -1 : 0;
            nested = nested || depth >= 2;
        }
        automatic = automatic || text.find("*auto") != std::string::npos;
        story::ParseResult r = story::parse({text, f.string()});
        if (!r.ok())
            continue;
        bool any = false;
        for (const auto &d : story::lint(*r.graph))
            any = any || d.severity != story::Severity::Info;
        clean += !any;
    }
    auto defects = stories(corpus / "defects");
    int located = 0;
    for (const auto &f : defects) {
        std::string text = slurp(f);
        std::string first = text.substr(0, text.find('\n'));
        if (first.rfind("// expect: ", 0) != 0)
            continue;
        std::string rest = first.substr(11);
        int line = std::stoi(rest.substr(0, rest.find(':')));
        std::string expect = rest.substr(rest.find(": ") + 2);
        story::ParseResult r = story::parse({text, f.string()});
        std::vector<story::Diagnostic> diags = r.ok() ? story::lint(*r.graph) : r.errors;
        bool hit = false;
        for (const auto &d : diags)
            hit = hit || (d.pos.line == line && d.severity != story::Severity::Info &&
                          d.message.find(expect) != std::string::npos);
        located += hit;
    }
    double dt = seconds_since(t0);
    o.check(valid.size() >= 10 && clean == static_cast<int>(valid.size()),
            std::to_string(clean) + "/" + std::to_string(valid.size()) + " valid clean");
    o.check(nested && automatic, "corpus has nested tags and auto choices");
    o.check(defects.size() >= 8 && located == static_cast<int>(defects.size()),
            std::to_string(located) + "/" + std::to_string(defects.size()) + " defects at their line");
    o.check(dt < 1.0, "runtime " + fmt(dt, 3) + " s < 1 s");
}

// DSP ----------------------------------------------------------------------------------

std::vector<double> sine(double f, double seconds, double fs, double amp = 1.0)
{
    std::vector<double> x(static_cast<std::size_t>(seconds * fs));
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = amp * std::sin(2 * M_PI * f * static_cast<double>(i) / fs);
    return x;
}

double rms_middle(const std::vector<double> &x)
{
    std::size_t a = x.size() / 4, b = 3 * x.size() / 4;
    double s = 0;
    for (std::size_t i = a; i < b; ++i)
        s += x[i] * x[i];
    return std::sqrt(s / static_cast<double>(b - a));
}

// Bi-exponential responses normalized to peak `amp`.
std::vector<double> scr_train(const std::vector<double> &onsets, double amp, double seconds, double fs, double drift)
{
    double tr = 0.7, td = 2.0;
    double tp = std::log(td / tr) * tr * td / (td - tr);
    double peak = std::exp(-tp / td) - std::exp(-tp / tr);
    std::vector<double> x(static_cast<std::size_t>(seconds * fs));
    for (std::size_t i = 0; i < x.size(); ++i) {
        double t = static_cast<double>(i) / fs;
        double v = 2.0 + drift * t;
        for (double on : onsets)
            if (t >= on)
                v += amp * (std::exp(-(t - on) / td) - std::exp(-(t - on) / tr)) / peak;
        x[i] = v;
    }
    return x;
}

// 70 Hz gaze, on screen except for the given (last seen, first seen again) gaps.
features::GazeTrace gaze_with_gaps(double t1, const std::vector<std::pair<double, double>> &gaps)
{
    features::GazeTrace g;
    auto add = [&](double t, bool on) { g.push_back({t, on, 0.5, 0.5, 1.0}); };
    double t = 0;
    for (const auto &[a, b] : gaps) {
        for (; t <= a + 1e-12; t += 1.0 / 70)
            add(t, true);
        g.back().t = a;
        add(a + 0.4 * (b - a), false);
        add(b, true);
        t = b + 1.0 / 70;
    }
    for (; t < t1; t += 1.0 / 70)
        add(t, true);
    return g;
}

void dsp(Outcome &o)
{
    using namespace features;
    BreathStats b = breathing_features(sine(0.25, 70, 512, 2.0), 512);
    o.check(b.rate_bpm && std::abs(*b.rate_bpm - 15.0) <= 0.5,
            "breathing " + (b.rate_bpm ? fmt(*b.rate_bpm) : std::string("none")) + " bpm");
    o.check(b.rmssd && *b.rmssd <= 0.01, "RMSSD " + (b.rmssd ? fmt(*b.rmssd) : std::string("none")) + " s");

    auto through = [](double f) {
        auto dec = block_decimate(sine(f, 70, 512), 32);
        return rms_middle(sosfiltfilt(butter_bandpass(4, 0.1, 0.35, 16.0), dec, 480));
    };
    double pass = through(0.2);
    double lo = -20 * std::log10(through(0.05) / pass), hi = -20 * std::log10(through(1.0) / pass);
    o.check(lo >= 20 && hi >= 20, "stopband " + fmt(lo, 3) + "/" + fmt(hi, 3) + " dB");

    std::mt19937_64 rng(9);
    int eda_ok = 0, eda_n = 0;
    for (int k = 1; k <= 5; ++k)
        for (int rep = 0; rep < 8; ++rep) {
            std::vector<double> onsets;
            double t = std::uniform_real_distribution<double>(3, 8)(rng);
            for (int i = 0; i < k; ++i) {
                onsets.push_back(t);
                t += std::uniform_real_distribution<double>(3, 9)(rng);
            }
            double amp = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
            double drift = std::uniform_real_distribution<double>(-0.004, 0.004)(rng);
            eda_ok += eda_features(scr_train(onsets, amp, t + 10, 512, drift), 512).n_peaks == k;
            ++eda_n;
        }
    o.check(eda_ok == eda_n, "EDA count " + std::to_string(eda_ok) + "/" + std::to_string(eda_n));

    // Chains of rotations about random axes by known angles.
    std::uniform_real_distribution<double> u(-1, 1);
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        HeadTrace h{{0.0, Quat{}}};
        double expected = 0;
        for (int i = 1; i < 20; ++i) {
            double angle = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
            Quat next = h.back().q * Quat::axis_angle(u(rng), u(rng), u(rng) + 1.5, angle);
            double n = next.norm();
            h.push_back({i * 0.05, {next.w / n, next.x / n, next.y / n, next.z / n}});
            expected += angle;
        }
        auto s = head_motion(h);
        worst = std::max(worst, s.travel ? std::abs(*s.travel - expected) : 1.0);
    }
    o.check(worst <= 1e-6, "head travel error " + fmt(worst, 2) + " rad");

    auto triple = gaze_with_gaps(10, {{1.0, 1.049}, {3.0, 3.3}, {6.0, 6.501}});
    BlinkStats bl = detect_blinks(triple);
    double wander = mind_wandering(triple);
    bool gaps_ok = bl.count == 1 && bl.mean_duration && std::abs(*bl.mean_duration - 0.300) < 1e-9 &&
                   std::abs(wander - 0.501) < 1e-9;
    o.check(gaps_ok, "49/300/501 ms -> " + std::to_string(bl.count) + " blink, " + fmt(wander) + " s wandering");
}

// Classifier -----------------------------------------------------------------------------

// Subjects with large offsets; planted effects on features 0..4.
classify::Dataset planted(int n_subjects, int per_class, double shift, std::uint64_t seed)
{
    const std::size_t dim = 22;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0, 1);
    classify::Dataset d;
    d.construct = "test";
    for (std::size_t j = 0; j < dim; ++j)
        d.registry.push_back("f" + std::to_string(j));
    for (int s = 0; s < n_subjects; ++s) {
        std::vector<double> offset(dim);
        for (double &v : offset)
            v = 10 * z(rng);
        for (int c = 0; c < 2; ++c)
            for (int r = 0; r < per_class; ++r) {
                classify::Observation ob;
                ob.subject = "s" + std::to_string(s);
                ob.label = c == 0 ? classify::Class::A : classify::Class::B;
                for (std::size_t j = 0; j < dim; ++j) {
                    double effect = j < 3 ? (c == 0 ? shift : -shift) : j < 5 ? (c == 0 ? -shift : shift) : 0;
                    ob.values.push_back(offset[j] + effect / 2 + z(rng));
                }
                d.observations.push_back(ob);
            }
    }
    return d;
}

std::vector<classify::Class> all_labels(const classify::LosoResult &r)
{
    std::vector<classify::Class> out;
    for (const auto &s : r.per_subject)
        for (const auto &p : s.predictions)
            out.push_back(p.label);
    return out;
}

void classifier(Outcome &o)
{
    using namespace classify;
    // Means at +-2 sigma along one axis: Bayes accuracy is Phi(2).
    const double bayes = 0.5 * std::erfc(-2.0 / std::sqrt(2.0));
    std::mt19937_64 rng(29);
    std::normal_distribution<double> z(0, 1);
    auto sample = [&](int n, Eigen::MatrixXd &x, std::vector<bool> &a) {
        x.resize(n, 5);
        a.resize(n);
        for (int i = 0; i < n; ++i) {
            a[i] = i % 2 == 0;
            for (int j = 0; j < 5; ++j)
                x(i, j) = z(rng) + (j == 0 ? (a[i] ? 2.0 : -2.0) : 0.0);
        }
    };
    Eigen::MatrixXd train, test;
    std::vector<bool> ta, sa;
    sample(10000, train, ta);
    sample(10000, test, sa);
    Pca p = fit_pca(train);
    Lda l = fit_lda(p.project(train), ta);
    Eigen::MatrixXd zt = p.project(test);
    int correct = 0;
    for (int i = 0; i < zt.rows(); ++i)
        correct += (l.score(zt.row(i).transpose()) >= 0) == sa[i];
    double acc = correct / 10000.0;
    o.check(std::abs(acc - bayes) <= 0.02, "LDA " + fmt(acc) + " vs Bayes " + fmt(bayes));

    // Data of known rank r embedded in 22 dimensions.
    int rank_ok = 0, rank_n = 0;
    for (int rank = 1; rank <= 6; ++rank)
        for (int n : {200, 12}) {
            Eigen::MatrixXd dirs = Eigen::MatrixXd::NullaryExpr(22, rank, [&]() { return z(rng); });
            dirs = Eigen::HouseholderQR<Eigen::MatrixXd>(dirs).householderQ() * Eigen::MatrixXd::Identity(22, rank);
            Eigen::MatrixXd lat = Eigen::MatrixXd::NullaryExpr(n, rank, [&]() { return z(rng); });
            lat = lat.rowwise() - lat.colwise().mean();
            lat = Eigen::HouseholderQR<Eigen::MatrixXd>(lat).householderQ() * Eigen::MatrixXd::Identity(n, rank);
            Eigen::MatrixXd x = (lat * dirs.transpose()).rowwise() + Eigen::RowVectorXd::Constant(22, 3.0);
            rank_ok += fit_pca(x).basis.cols() == rank;
            ++rank_n;
        }
    o.check(rank_ok == rank_n, "PCA rank " + std::to_string(rank_ok) + "/" + std::to_string(rank_n));

    Dataset d = planted(14, 2, 2.0, 53);
    for (int i = 0; i < 30; ++i)
        d.observations[rng() % d.observations.size()].values[rng() % 22] = std::nullopt;
    std::vector<Class> base = all_labels(loso_cv(d));
    std::uniform_real_distribution<double> u(0.1, 3.0);
    int changes = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Dataset t = d;
        for (const std::string &s : d.subjects())
            for (std::size_t j = 0; j < 22; ++j) {
                double a = u(rng), c = u(rng) * 10 - 15;
                int kind = static_cast<int>(rng() % 4);
                for (auto &ob : t.observations) {
                    if (ob.subject != s || !ob.values[j])
                        continue;
                    double x = *ob.values[j] / 40.0;
                    switch (kind) {
                    case 0: x = a * x + c; break;
                    case 1: x = std::exp(a * x); break;
                    case 2: x = x * x * x + a * x; break;
                    default: x = std::atan(a * x) + c; break;
                    }
                    ob.values[j] = x;
                }
            }
        changes += all_labels(loso_cv(t)) != base;
    }
    o.check(changes == 0, std::to_string(changes) + "/100 transforms changed labels");

    Dataset small = planted(8, 2, 2.0, 61);
    LosoResult r = loso_cv(small);
    std::normal_distribution<double> wild(0, 50);
    int leaked = 0;
    for (std::size_t f = 0; f < r.per_subject.size(); ++f) {
        Dataset m = small;
        for (auto &ob : m.observations)
            if (ob.subject == r.per_subject[f].subject)
                for (auto &v : ob.values)
                    v = (rng() % 5 == 0) ? Missing{} : Missing{wild(rng)};
        leaked += model_to_json(loso_cv(m).folds[f]) != model_to_json(r.folds[f]);
    }
    o.check(leaked == 0, std::to_string(leaked) + " folds moved by held-out data");
}

// End to end ------------------------------------------------------------------------------

void end_to_end(Outcome &o)
{
    auto t0 = Clock::now();
    sim::Cohort c = sim::make_cohort(14, sim::paired_stories(1.0), 1);
    o.check(c.rows.size() == 14 * 6, std::to_string(c.rows.size()) + " windows");
    std::mt19937_64 rng(71);
    for (const auto &def : sim::paired_constructs()) {
        classify::Dataset d = classify::dataset_from_features(c.rows, def.class_a, def.class_b, def.name);
        classify::LosoResult r = classify::loso_cv(d, false);
        o.check(r.accuracy >= 0.90, def.name + " " + fmt(r.accuracy, 3));

        // Every feature at least as heavy as the third-largest weight must be
        // planted, with the planted sign.
        auto want = sim::planted_associations(def.name);
        std::vector<double> mags;
        for (double w : r.weights)
            mags.push_back(std::abs(w));
        std::sort(mags.rbegin(), mags.rend());
        bool signs = mags.size() >= 3;
        for (std::size_t j = 0; signs && j < d.registry.size(); ++j) {
            if (std::abs(r.weights[j]) < mags[2] - 1e-12)
                continue;
            auto it = want.find(d.registry[j]);
            signs = it != want.end() && (r.weights[j] > 0 ? 1 : -1) == it->second;
        }
        o.check(signs, def.name + " top-3 signs");

        // Labels swapped at random within each subject.
        double sum = 0;
        const int perms = 20;
        for (int k = 0; k < perms; ++k) {
            classify::Dataset p = d;
            std::map<std::string, std::vector<std::size_t>> by_subject;
            for (std::size_t i = 0; i < p.observations.size(); ++i)
                by_subject[p.observations[i].subject].push_back(i);
            for (auto &[s, idx] : by_subject) {
                std::vector<classify::Class> labels;
                for (std::size_t i : idx)
                    labels.push_back(p.observations[i].label);
                std::shuffle(labels.begin(), labels.end(), rng);
                for (std::size_t i = 0; i < idx.size(); ++i)
                    p.observations[idx[i]].label = labels[i];
            }
            sum += classify::loso_cv(p, false).accuracy;
        }
        double null = sum / perms;
        o.check(std::abs(null - 0.5) <= 0.15, def.name + " permuted " + fmt(null, 3));
    }
    double dt = seconds_since(t0);
    o.check(dt < 300, "runtime " + fmt(dt, 3) + " s < 300 s");
}

// Director --------------------------------------------------------------------------------

story::EngineEvent tag_event(story::EngineEventKind k, const std::string &tag)
{
    story::EngineEvent e;
    e.kind = k;
    e.tag = tag;
    return e;
}

// Balanced, possibly nested and revisited tags interleaved with updates,
// with deliberate timestamp collisions.
std::vector<director::LogEntry> random_log(std::mt19937_64 &rng)
{
    using story::EngineEventKind;
    const char *tags[] = {"DUNGEON", "FOREST", "CAVE"};
    const char *keys[] = {"arousal", "valence", "difficulty"};
    std::vector<director::LogEntry> log;
    std::vector<std::string> open;
    double t = 0;
    int n = std::uniform_int_distribution<int>(20, 200)(rng);
    for (int i = 0; i < n; ++i) {
        if (rng() % 3 != 0)
            t += std::uniform_int_distribution<int>(1, 50)(rng) * 0.01;
        int what = static_cast<int>(rng() % 6);
        if (what == 0) {
            std::string tag = tags[rng() % 3];
            if (std::find(open.begin(), open.end(), tag) == open.end()) {
                open.push_back(tag);
                log.push_back(director::MarkerEntry{t, tag_event(EngineEventKind::TagOpened, tag)});
            }
        } else if (what == 1 && !open.empty()) {
            log.push_back(director::MarkerEntry{t, tag_event(EngineEventKind::TagClosed, open.back())});
            open.pop_back();
        } else {
            double v = std::uniform_real_distribution<double>(-1, 1)(rng);
            log.push_back(director::StateUpdate{t, {{keys[rng() % 3], v}}, "s"});
        }
    }
    t += 1;
    for (; !open.empty(); open.pop_back())
        log.push_back(director::MarkerEntry{t, tag_event(EngineEventKind::TagClosed, open.back())});
    return log;
}

bool bit_identical(const std::map<std::string, double> &a, const std::map<std::string, double> &b)
{
    if (a.size() != b.size())
        return false;
    for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib)
        if (ia->first != ib->first || std::memcmp(&ia->second, &ib->second, sizeof(double)) != 0)
            return false;
    return true;
}

void director_determinism(Outcome &o)
{
    std::mt19937_64 rng(89);
    int identical = 0;
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        auto log = random_log(rng);
        director::Director a, b;
        director::replay_log(a, log);
        director::replay_log(b, log);
        identical += bit_identical(a.variables(), b.variables());

        // Brute force: updates inside any visit [open, close).
        for (const auto &[name, acc] : a.accumulators())
            for (const auto &[key, st] : acc.keys) {
                double s = 0;
                std::size_t n = 0;
                for (const auto &e : log) {
                    const auto *u = std::get_if<director::StateUpdate>(&e);
                    if (!u || u->values[0].first != key)
                        continue;
                    for (auto [op, cl] : acc.visits)
                        if (u->t >= op && u->t < cl) {
                            s += u->values[0].second;
                            ++n;
                            break;
                        }
                }
                double got = a.variables().at(story::tag_scoped_variable(key, acc.tag));
                worst = std::max(worst, n ? std::abs(got - s / static_cast<double>(n)) : 1.0);
            }
    }
    o.check(identical == 100, std::to_string(identical) + "/100 bit-identical");
    o.check(worst <= 1e-9, "tag mean error " + fmt(worst, 2));
}

// Transport --------------------------------------------------------------------------------

transport::StreamInfo breathing_info()
{
    transport::StreamInfo i;
    i.name = "breathing";
    i.kind = transport::StreamKind::Signal;
    i.channel_count = 1;
    i.nominal_rate = 512;
    i.source_id = "sim-breath";
    return i;
}

transport::StreamInfo marker_info()
{
    transport::StreamInfo i;
    i.name = "pif-markers";
    i.kind = transport::StreamKind::Marker;
    i.channel_count = 1;
    i.source_id = "pif-markers";
    return i;
}

void record_session(const fs::path &sink)
{
    using namespace transport;
    Registry reg;
    Outlet br = reg.open_outlet(breathing_info());
    Outlet mk = reg.open_outlet(marker_info());
    std::vector<Inlet> inlets{reg.open_inlet("sim-breath", 1 << 20), reg.open_inlet("pif-markers")};
    Recorder rec(sink, std::move(inlets), {{"subject", "s01"}});
    double t0 = 123.456789;
    int marker = 0;
    for (int i = 0; i < 70 * 512; ++i) {
        double t = t0 + i / 512.0;
        br.push(t, {std::sin(2 * M_PI * 0.25 * i / 512.0) * 1.7 + 0.1 * i / 7.0});
        if (i % (5 * 512) == 0 && marker < 14)
            mk.push_marker(t, "PAGE:" + std::to_string(marker++));
    }
    br.close();
    mk.close();
    while (!rec.all_exhausted())
        rec.poll();
    rec.stop();
}

void replay_and_record(const fs::path &src, const fs::path &sink)
{
    using namespace transport;
    Recording r = read_recording(src);
    Registry reg;
    Replayer rep(r, reg);
    std::vector<Inlet> inlets;
    for (const StreamInfo &s : rep.streams())
        inlets.push_back(reg.open_inlet(s.source_id, 1 << 20));
    Recorder rec(sink, std::move(inlets), r.header.meta);
    rep.run(ReplaySpeed::Max);
    rep.close();
    while (!rec.all_exhausted())
        rec.poll();
    rec.stop();
}

// Per stream: raw payload text and timestamps, read with a generic parser.
struct FileView {
    std::map<std::string, std::vector<std::string>> payloads;
    std::map<std::string, std::vector<double>> times;
};

FileView view(const fs::path &p)
{
    FileView v;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        if (j["type"] != "sample")
            continue;
        v.payloads[j["stream"]].push_back(j["v"].dump());
        v.times[j["stream"]].push_back(j["t"].get<double>());
    }
    return v;
}

void transport_checks(Outcome &o)
{
    using namespace transport;
    fs::path a = scratch("a.pifrec"), b = scratch("b.pifrec"), c = scratch("c.pifrec");
    record_session(a);
    replay_and_record(a, b);
    replay_and_record(b, c);
    FileView va = view(a), vb = view(b), vc = view(c);
    bool same = !va.payloads.empty() && va.payloads == vb.payloads && vb.payloads == vc.payloads;
    double worst = 0;
    for (const auto &[id, ta] : va.times) {
        const auto &tb = vb.times[id], &tc = vc.times[id];
        if (ta.size() != tb.size() || tb.size() != tc.size()) {
            same = false;
            continue;
        }
        for (std::size_t i = 1; i < ta.size(); ++i) {
            worst = std::max(worst, std::abs((tb[i] - tb[i - 1]) - (ta[i] - ta[i - 1])));
            worst = std::max(worst, std::abs((tc[i] - tc[i - 1]) - (ta[i] - ta[i - 1])));
        }
    }
    o.check(same && worst <= 1e-6 + 1e-12, "record/replay/record fixed point, interval error " + fmt(worst, 2));

    Registry reg;
    Hub shifted(reg, "127.0.0.1", 0, [] { return local_clock() + 2.0; });
    ClockOffset off = remote_offset("127.0.0.1", shifted.port(), 9);
    o.check(std::abs(off.offset - 2.0) <= 0.005, "clock shift " + fmt(off.offset, 6) + " s");

    Registry slow_reg;
    Outlet br = slow_reg.open_outlet(breathing_info());
    std::vector<Inlet> inlets{slow_reg.open_inlet("sim-breath", 64)};
    fs::path s = scratch("slow.pifrec");
    Recorder rec(s, std::move(inlets));
    rec.set_poll_delay(std::chrono::milliseconds(30));
    rec.start();
    const std::size_t n = 20000;
    for (std::size_t i = 0; i < n; ++i)
        br.push(static_cast<double>(i) / 512.0, {static_cast<double>(i)});
    br.close();
    RecordingSummary sum = rec.stop();
    std::size_t written = read_recording(s).samples.size();
    o.check(sum.total_overflow() > 0 && sum.total_samples() + sum.total_overflow() == n &&
                written == sum.total_samples(),
            std::to_string(sum.total_samples()) + " kept + " + std::to_string(sum.total_overflow()) +
                " overflow = " + std::to_string(n));
}

// Latency ----------------------------------------------------------------------------------

const char *kSteerStory = R"(== intro ==
##CAVE_START
You enter a cave.
---
It is dark.
##CAVE_STOP
*auto {threshold phys_arousal 0.5} -> flee, linger

== flee ==
You run back into the light.
-> END

== linger ==
You wait for your eyes to adjust.
-> END
)";

void latency(Outcome &o)
{
    story::ParseResult pr = story::parse({kSteerStory, "steer"});
    if (!pr.ok()) {
        o.check(false, "fixture story failed to parse");
        return;
    }
    session::SessionCore core(std::make_shared<const story::StoryGraph>(std::move(*pr.graph)), session::CoreConfig{});
    const std::size_t events = 1000;
    std::vector<double> lat;
    std::mutex mu;
    core.set_state_hook([&](const director::StateUpdate &u, double visible) {
        std::lock_guard lock(mu);
        lat.push_back(visible - u.t);
    });
    transport::Registry reg;
    transport::Outlet out = reg.open_outlet(
        transport::StreamInfo{"state", transport::StreamKind::Signal, 1, 512, {"arousal"}, "state"}.normalized());
    transport::Inlet in = reg.open_inlet("state");
    core.start();
    std::thread pump([&] {
        std::size_t got = 0;
        while (got < events)
            for (const auto &smp : in.pull(64, std::chrono::milliseconds(100))) {
                core.post_state(session::update_from_sample(in.info(), smp));
                ++got;
            }
    });
    auto next = Clock::now();
    for (std::size_t i = 0; i < events; ++i) {
        next += std::chrono::microseconds(1953);
        std::this_thread::sleep_until(next);
        out.push(transport::local_clock(), {static_cast<double>(i % 2)});
    }
    pump.join();
    core.sync();
    core.stop();
    if (lat.size() != events) {
        o.check(false, std::to_string(lat.size()) + " of " + std::to_string(events) + " updates seen");
        return;
    }
    std::nth_element(lat.begin(), lat.begin() + events / 2, lat.end());
    double median = lat[events / 2];
    o.check(median <= 0.1, "median " + fmt(median * 1000, 3) + " ms over " + std::to_string(events));
}

} // namespace

int main(int argc, char **argv)
{
    fs::path corpus = argc > 1 ? fs::path(argv[1]) : fs::path(PIF_CORPUS_DIR);
    struct Criterion {
        const char *name;
        std::function<void(Outcome &)> run;
    };
    std::vector<Criterion> criteria{
        {"parser/lint", [&](Outcome &o) { parser_lint(o, corpus); }},
        {"dsp oracles", dsp},
        {"classifier oracles", classifier},
        {"end-to-end synthetic study", end_to_end},
        {"director determinism", director_determinism},
        {"transport", transport_checks},
        {"pipeline latency", latency},
    };
    int failed = 0;
    for (const auto &c : criteria) {
        Outcome o;
        auto t0 = Clock::now();
        try {
            c.run(o);
        } catch (const std::exception &e) {
            o.check(false, std::string("exception: ") + e.what());
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << " (" << fmt(seconds_since(t0), 3) << " s): "
                  << o.detail.str() << std::endl;
    }
    std::error_code ec;
    fs::remove_all(scratch("").parent_path(), ec);
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed ? 1 : 0;
}
