#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "common/error.hpp"
#include "features/features.hpp"

using namespace pif::features;

namespace {

std::vector<double> sine(double f, double seconds, double fs, double amp = 1.0, double phase = 0.0)
{
    std::vector<double> x(static_cast<std::size_t>(seconds * fs));
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = amp * std::sin(2 * M_PI * f * static_cast<double>(i) / fs + phase);
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

// Analytic Butterworth band-pass magnitude via the low-pass prototype
// frequency after bilinear prewarping.
double analytic_bandpass_gain(int n, double lo, double hi, double fs, double f)
{
    auto warp = [&](double v) { return 2 * fs * std::tan(M_PI * v / fs); };
    double w = warp(f), w1 = warp(lo), w2 = warp(hi);
    double omega = std::abs(w * w - w1 * w2) / (w * (w2 - w1));
    return 1.0 / std::sqrt(1.0 + std::pow(omega, 2 * n));
}

double analytic_lowpass_gain(int n, double fc, double fs, double f)
{
    double omega = std::tan(M_PI * f / fs) / std::tan(M_PI * fc / fs);
    return 1.0 / std::sqrt(1.0 + std::pow(omega, 2 * n));
}

// Gaze trace at 70 Hz over [t0, t1) with given on-screen predicate.
GazeTrace gaze_with_gaps(double t1, const std::vector<std::pair<double, double>> &gaps)
{
    GazeTrace g;
    auto add = [&](double t, bool on) { g.push_back({t, on, 0.5, 0.5, 1.0}); };
    double t = 0;
    for (const auto &[a, b] : gaps) {
        for (; t <= a + 1e-12; t += 1.0 / 70)
            add(t, true);
        // Last on-screen sample exactly at a, first after exactly at b.
        g.back().t = a;
        add(a + 0.4 * (b - a), false);
        add(b, true);
        t = b + 1.0 / 70;
    }
    for (; t < t1; t += 1.0 / 70)
        add(t, true);
    return g;
}

std::vector<double> scr_train(const std::vector<double> &onsets, double amp, double seconds, double fs,
                              double drift_per_s = 0.0, double level = 2.0)
{
    double tr = 0.7, td = 2.0;
    double tp = std::log(td / tr) * tr * td / (td - tr);
    double peak = std::exp(-tp / td) - std::exp(-tp / tr);
    std::vector<double> x(static_cast<std::size_t>(seconds * fs));
    for (std::size_t i = 0; i < x.size(); ++i) {
        double t = static_cast<double>(i) / fs;
        double v = level + drift_per_s * t;
        for (double o : onsets)
            if (t >= o)
                v += amp * (std::exp(-(t - o) / td) - std::exp(-(t - o) / tr)) / peak;
        x[i] = v;
    }
    return x;
}

} // namespace

// Filters ------------------------------------------------------------------------

TEST_CASE("dsp: Butterworth magnitude matches the analytic response")
{
    Sos bp = butter_bandpass(4, 0.1, 0.35, 16.0);
    CHECK(bp.size() == 4);
    for (double f = 0.01; f < 7.9; f *= 1.17)
        CHECK(sos_gain(bp, f, 16.0) == doctest::Approx(analytic_bandpass_gain(4, 0.1, 0.35, 16.0, f)).epsilon(1e-8));
    Sos lp = butter_lowpass(3, 0.05, 16.0);
    for (double f = 0.001; f < 7.9; f *= 1.3)
        CHECK(sos_gain(lp, f, 16.0) == doctest::Approx(analytic_lowpass_gain(3, 0.05, 16.0, f)).epsilon(1e-8));
    Sos hp = butter_highpass(2, 1.0, 100.0);
    CHECK(sos_gain(hp, 50.0, 100.0) == doctest::Approx(1.0));
    CHECK(sos_gain(hp, 0.0, 100.0) < 1e-12);
}

TEST_CASE("dsp: band-pass gains agree with a reference implementation")
{
    // scipy.signal.butter(4, [0.1, 0.35], 'bandpass', fs=16, output='sos') evaluated with sosfreqz.
    Sos bp = butter_bandpass(4, 0.1, 0.35, 16.0);
    CHECK(sos_gain(bp, 0.05, 16.0) == doctest::Approx(0.021908906039564014).epsilon(1e-9));
    CHECK(sos_gain(bp, 0.2, 16.0) == doctest::Approx(0.9999999952489736).epsilon(1e-9));
    CHECK(sos_gain(bp, 1.0, 16.0) == doctest::Approx(0.004298867093679427).epsilon(1e-9));
    // Interior of sosfiltfilt(sos, x, padlen=150); edges depend on how the
    // initial state is spread over sections, the interior does not.
    std::vector<double> x(200);
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = std::sin(2 * M_PI * 0.2 * i / 16.0) + 0.3 * std::cos(2 * M_PI * 0.9 * i / 16.0) + 0.01 * i;
    std::vector<double> y = sosfiltfilt(bp, x, 150);
    CHECK(y[100] == doctest::Approx(1.0276655743341805).epsilon(1e-3));
}

TEST_CASE("dsp: stopband attenuation through the breathing filter")
{
    double fs = 512;
    auto through = [&](double f) {
        auto x = sine(f, 70, fs);
        auto dec = block_decimate(x, 32);
        return rms_middle(sosfiltfilt(butter_bandpass(4, 0.1, 0.35, 16.0), dec, 480));
    };
    double pass = through(0.2);
    double lo = 20 * std::log10(through(0.05) / pass);
    double hi = 20 * std::log10(through(1.0) / pass);
    CHECK(lo <= -20.0);
    CHECK(hi <= -20.0);
    CHECK(pass == doctest::Approx(1 / std::sqrt(2.0)).epsilon(0.02));
}

TEST_CASE("dsp: forward-backward filtering is zero phase")
{
    double fs = 16;
    auto x = sine(0.2, 70, fs, 1.0, 0.3);
    auto y = sosfiltfilt(butter_bandpass(4, 0.1, 0.35, fs), x, 480);
    auto peaks = find_peaks(y, {0.5, 1});
    int checked = 0;
    for (const Peak &p : peaks) {
        if (p.index < 240 || p.index > y.size() - 240)
            continue;
        double t = refine_peak(y, p.index) / fs;
        // Input maxima: 2*pi*0.2*t + 0.3 = pi/2 + 2*pi*k.
        double k = std::round((t * 0.2) - (M_PI / 2 - 0.3) / (2 * M_PI));
        double t_true = ((M_PI / 2 - 0.3) / (2 * M_PI) + k) / 0.2;
        CHECK(std::abs(t - t_true) < 0.010);
        ++checked;
    }
    CHECK(checked >= 5);
}

TEST_CASE("dsp: find_peaks follows prominence and distance rules")
{
    std::vector<double> x{0, 1, 0, 5, 0, 2, 2, 2, 0, 0.5, 0.4, 3, 0};
    auto all = find_peaks(x);
    REQUIRE(all.size() == 5);
    CHECK(all[2].index == 6); // flat top resolved to the middle
    auto prominent = find_peaks(x, {1.5, 1});
    std::vector<std::size_t> idx;
    for (auto &p : prominent)
        idx.push_back(p.index);
    CHECK(idx == std::vector<std::size_t>{3, 6, 11});
    auto spaced = find_peaks(x, {0, 4});
    idx.clear();
    for (auto &p : spaced)
        idx.push_back(p.index);
    CHECK(idx == std::vector<std::size_t>{3, 11});
    CHECK(all[0].prominence == 1.0);
    CHECK(all[3].prominence == doctest::Approx(0.1));
}

// Gaze ---------------------------------------------------------------------------

TEST_CASE("gaze: blinks and mind wandering")
{
    auto one = gaze_with_gaps(5, {{1.0, 1.3}});
    BlinkStats b = detect_blinks(one);
    CHECK(b.count == 1);
    CHECK(*b.mean_duration == doctest::Approx(0.300));

    auto short_gap = gaze_with_gaps(5, {{1.0, 1.049}});
    b = detect_blinks(short_gap);
    CHECK(b.count == 0);
    CHECK_FALSE(b.mean_duration);

    auto three = gaze_with_gaps(10, {{1.0, 1.1}, {3.0, 3.4}, {6.0, 6.6}});
    b = detect_blinks(three);
    CHECK(b.count == 2);
    CHECK(*b.mean_duration == doctest::Approx(0.250));
    CHECK(mind_wandering(three) == doctest::Approx(0.600));

    CHECK(mind_wandering(gaze_with_gaps(5, {})) == 0.0);
    CHECK(mind_wandering(gaze_with_gaps(10, {{1.0, 1.501}, {4.0, 6.0}})) == doctest::Approx(2.501));

    // The 49/300/501 ms triple: one ignored, one blink, one wandering.
    auto triple = gaze_with_gaps(10, {{1.0, 1.049}, {3.0, 3.3}, {6.0, 6.501}});
    b = detect_blinks(triple);
    CHECK(b.count == 1);
    CHECK(*b.mean_duration == doctest::Approx(0.300));
    CHECK(mind_wandering(triple) == doctest::Approx(0.501));
}

TEST_CASE("gaze: every gap lands in exactly one class")
{
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::pair<double, double>> gaps;
        double t = 0.5;
        int n = std::uniform_int_distribution<int>(0, 8)(rng);
        std::vector<double> durs;
        for (int i = 0; i < n; ++i) {
            double d = std::uniform_real_distribution<double>(0.01, 1.2)(rng);
            gaps.push_back({t, t + d});
            durs.push_back(d);
            t += d + std::uniform_real_distribution<double>(0.2, 1.0)(rng);
        }
        auto g = gaze_with_gaps(t + 1, gaps);
        auto found = offscreen_gaps(g);
        REQUIRE(found.size() == durs.size());
        int ignored = 0, blinks = 0;
        double wander = 0;
        for (double d : durs) {
            if (d < 0.05)
                ++ignored;
            else if (d <= 0.5)
                ++blinks;
            else
                wander += d;
        }
        CHECK(detect_blinks(g).count == blinks);
        CHECK(mind_wandering(g) == doctest::Approx(wander).epsilon(1e-9));
        CHECK(ignored + blinks + (n - ignored - blinks) == n);
    }
}

namespace {

// Stationary clusters at 70 Hz joined by linear moves of the given duration.
GazeTrace clusters(const std::vector<std::pair<double, double>> &pos, double dwell, double move)
{
    GazeTrace g;
    double t = 0, dt = 1.0 / 70;
    for (std::size_t c = 0; c < pos.size(); ++c) {
        double end = t + dwell;
        for (; t < end - 1e-9; t += dt)
            g.push_back({t, true, pos[c].first, pos[c].second, 1.0});
        if (c + 1 < pos.size()) {
            double t_end = t + move;
            double t_start = t;
            for (; t < t_end - 1e-9; t += dt) {
                double f = (t - t_start + dt) / (move + dt);
                g.push_back({t, true, pos[c].first + f * (pos[c + 1].first - pos[c].first),
                             pos[c].second + f * (pos[c + 1].second - pos[c].second), 1.0});
            }
        }
    }
    return g;
}

} // namespace

TEST_CASE("gaze: fixations and saccades on constructed clusters")
{
    auto g = clusters({{0.1, 0.5}, {0.3, 0.5}, {0.5, 0.5}, {0.7, 0.5}, {0.9, 0.5}}, 0.4, 0.03);
    FixSacStats s = fixations_saccades(g);
    CHECK(s.n_fixations == 5);
    CHECK(s.n_saccades == 4);
    CHECK(*s.mean_saccade_angle == doctest::Approx(0.0));
    CHECK(*s.mean_saccade_len == doctest::Approx(0.2).epsilon(0.15));
    CHECK(*s.mean_fixation_dur > 0.3);
    CHECK(s.n_split_saccades == 4);

    auto back = clusters({{0.9, 0.5}, {0.1, 0.5}}, 0.4, 0.03);
    CHECK(*fixations_saccades(back).mean_saccade_angle == doctest::Approx(180.0));
    auto down = clusters({{0.5, 0.1}, {0.5, 0.9}}, 0.4, 0.03);
    CHECK(*fixations_saccades(down).mean_saccade_angle == doctest::Approx(90.0));
}

TEST_CASE("gaze: a slow drift is split at 350 ms")
{
    // Three clusters; the second move drifts for 700 ms.
    GazeTrace g = clusters({{0.1, 0.5}, {0.3, 0.5}}, 0.4, 0.03);
    GazeTrace tail = clusters({{0.3, 0.5}, {0.8, 0.5}}, 0.4, 0.8);
    double shift = g.back().t + 1.0 / 70;
    // Continue from the second cluster: drop the duplicate dwell of `tail`.
    for (const auto &s : tail)
        if (s.t >= 0.4 - 1e-9)
            g.push_back({s.t + shift, true, s.x, s.y, 1.0});
    FixSacStats s = fixations_saccades(g);
    CHECK(s.n_fixations == 3);
    REQUIRE(s.n_saccades == 2);
    // By hand: the 30 ms move stays whole; the drift lasts just over 700 ms
    // of sample time and is cut into 350 ms pieces plus a remainder.
    auto fix = detect_fixations(g);
    auto sac = saccades_between(g, fix);
    double d = sac[1].duration();
    CHECK(d > 0.7);
    int expected_pieces = static_cast<int>(std::ceil(d / 0.35 - 1e-9));
    CHECK(s.n_split_saccades == 1 + expected_pieces);
    auto pieces = split_saccades(g, sac);
    double sum = 0;
    for (std::size_t i = 1; i < pieces.size(); ++i)
        sum += pieces[i].length();
    // The drift is straight, so the pieces add up to its length.
    CHECK(sum == doctest::Approx(sac[1].length()).epsilon(1e-9));
}

TEST_CASE("gaze: pupil statistics")
{
    GazeTrace g;
    for (int i = 0; i < 100; ++i)
        g.push_back({i / 70.0, true, 0.5, 0.5, 1.0});
    auto p = pupil_stats(g);
    CHECK(*p.mean == 1.0);
    CHECK(*p.sd == 0.0);
    for (int i = 0; i < 100; ++i)
        g[i].pupil = i % 2 ? 1.1 : 0.9;
    p = pupil_stats(g);
    CHECK(*p.mean == doctest::Approx(1.0));
    CHECK(*p.sd == doctest::Approx(0.1));
    for (int i = 0; i < 100; ++i)
        g[i].pupil = 1.0 + 0.2 * i / 99.0;
    CHECK(*pupil_stats(g).mean == doctest::Approx(1.1));
    CHECK_FALSE(pupil_stats(GazeTrace{}).mean);
}

// Head --------------------------------------------------------------------------

TEST_CASE("head: travel and speed")
{
    HeadTrace h;
    for (int i = 0; i < 10; ++i)
        h.push_back({i * 0.1, Quat{}});
    auto s = head_motion(h);
    CHECK(*s.travel == 0.0);
    CHECK(*s.mean_speed == 0.0);

    HeadTrace step{{0.0, Quat{}}, {2.0, Quat::axis_angle(0.3, -1, 0.2, M_PI / 2)}};
    s = head_motion(step);
    CHECK(std::abs(*s.travel - M_PI / 2) < 1e-6);
    CHECK(std::abs(*s.mean_speed - M_PI / 4) < 1e-6);

    Quat q = Quat::axis_angle(1, 2, 3, 0.7);
    HeadTrace flip{{0.0, q}, {1.0, Quat{-q.w, -q.x, -q.y, -q.z}}};
    CHECK(std::abs(*head_motion(flip).travel) < 1e-12);

    HeadTrace bad{{0.0, Quat{}}, {1.0, Quat{1.001, 0, 0, 0}}};
    CHECK_THROWS_AS(head_motion(bad), pif::Error);
}

TEST_CASE("head: scripted rotations exact and invariant under a global rotation")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 100; ++trial) {
        // Successive rotations about random axes by known angles in (0, pi).
        HeadTrace h{{0.0, Quat{}}};
        double expected = 0;
        for (int i = 1; i < 20; ++i) {
            double angle = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
            Quat step = Quat::axis_angle(u(rng), u(rng), u(rng) + 1.5, angle);
            Quat next = h.back().q * step;
            double n = next.norm();
            next = {next.w / n, next.x / n, next.y / n, next.z / n};
            h.push_back({i * 0.05, next});
            expected += angle;
        }
        auto s = head_motion(h);
        CHECK(std::abs(*s.travel - expected) < 1e-6);
        Quat r = Quat::axis_angle(u(rng), u(rng), u(rng) + 0.1, u(rng) * 3);
        HeadTrace rotated = h;
        for (auto &x : rotated)
            x.q = r * x.q;
        CHECK(std::abs(*head_motion(rotated).travel - *s.travel) < 1e-9);
    }
}

// EDA ----------------------------------------------------------------------------

TEST_CASE("eda: injected responses are counted and measured")
{
    auto x = scr_train({8, 22, 40}, 0.5, 60, 512, 0.002);
    EdaStats s = eda_features(x, 512);
    CHECK(s.n_peaks == 3);
    REQUIRE(s.mean_peak_amp);
    CHECK(*s.mean_peak_amp == doctest::Approx(0.5).epsilon(0.05));
    CHECK(*s.mean_smna > 0);

    std::vector<double> flat(30 * 512, 3.0);
    EdaStats f = eda_features(flat, 512);
    CHECK(f.n_peaks == 0);
    CHECK_FALSE(f.mean_peak_amp);
    CHECK(std::abs(*f.mean_smna) < 1e-9);
}

TEST_CASE("eda: peak count equals k for separated responses")
{
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 40; ++trial) {
        int k = 1 + trial % 5;
        std::vector<double> onsets;
        double t = std::uniform_real_distribution<double>(3, 8)(rng);
        for (int i = 0; i < k; ++i) {
            onsets.push_back(t);
            t += std::uniform_real_distribution<double>(3, 9)(rng);
        }
        double amp = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
        auto x = scr_train(onsets, amp, t + 10, 512, std::uniform_real_distribution<double>(-0.004, 0.004)(rng));
        CHECK_MESSAGE(eda_features(x, 512).n_peaks == k, "k=" << k << " trial " << trial);
    }
}

TEST_CASE("eda: deconvolution concentrates the driver at the onset")
{
    double onset = 12.0;
    auto x = scr_train({onset}, 0.5, 40, 512);
    EdaDecomposition d = eda_decompose(x, 512);
    SmnaResult m = smna(d.phasic, d.rate);
    double total = 0, near = 0;
    for (std::size_t i = 0; i < m.driver.size(); ++i) {
        double t = (static_cast<double>(i) + 0.5) / m.rate;
        total += m.driver[i];
        if (std::abs(t - onset) <= 1.0)
            near += m.driver[i];
    }
    REQUIRE(total > 0);
    CHECK(near / total >= 0.8);
    for (double v : m.driver)
        CHECK(v >= 0.0);
}

// Breathing ---------------------------------------------------------------------------

TEST_CASE("breathing: rate and variability on periodic input")
{
    auto x = sine(0.25, 70, 512, 2.0);
    BreathStats s = breathing_features(x, 512);
    REQUIRE(s.rate_bpm);
    CHECK(std::abs(*s.rate_bpm - 15.0) <= 0.5);
    CHECK(*s.rmssd <= 0.01);
    REQUIRE(s.rate_bpm_int);
    CHECK(std::abs(*s.rate_bpm_int - 15.0) <= 0.5);
    CHECK(*s.rmssd_int <= 0.01);

    auto shortx = sine(0.25, 9, 512);
    BreathStats m = breathing_features(shortx, 512);
    CHECK_FALSE(m.rate_bpm);
    CHECK_FALSE(m.rmssd);
}

TEST_CASE("breathing: alternating cycle lengths")
{
    // Cycles alternate 5 s (0.2 Hz) and 1/0.3 s; phase advances 2*pi per
    // cycle, maxima at cycle starts.
    double fs = 512, T = 80;
    std::vector<double> x(static_cast<std::size_t>(T * fs));
    std::vector<double> starts{0};
    while (starts.back() < T)
        starts.push_back(starts.back() + (starts.size() % 2 ? 5.0 : 1.0 / 0.3));
    std::size_t c = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double t = i / fs;
        while (t >= starts[c + 1])
            ++c;
        double phase = 2 * M_PI * (t - starts[c]) / (starts[c + 1] - starts[c]);
        x[i] = std::cos(phase);
    }
    // Hand computation: intervals alternate 5 and 3.333 s, so every
    // successive difference is 1.6667 s in magnitude.
    double expected = 5.0 - 1.0 / 0.3;
    BreathStats s = breathing_features(x, fs);
    REQUIRE(s.rmssd);
    CHECK(*s.rmssd == doctest::Approx(expected).epsilon(0.15));
    CHECK(*s.rate_bpm == doctest::Approx(60.0 / (0.5 * (5.0 + 1.0 / 0.3))).epsilon(0.03));
    auto [rate, rmssd] = rate_and_rmssd({0, 5, 5 + 1 / 0.3, 10 + 1 / 0.3, 10 + 2 / 0.3});
    CHECK(*rmssd == doctest::Approx(expected));
    CHECK(*rate == doctest::Approx(60.0 / (0.5 * (5.0 + 1.0 / 0.3))));
}

// Extraction -----------------------------------------------------------------------

namespace {

PhysioWindow synthetic_window(double t0)
{
    PhysioWindow w;
    w.t0 = t0;
    w.t1 = t0 + 70;
    w.breathing = sine(0.25, 70, 512);
    w.eda = scr_train({10, 30, 50}, 0.4, 70, 512, 0.001);
    auto g = clusters({{0.1, 0.2}, {0.3, 0.2}, {0.5, 0.2}, {0.7, 0.2}, {0.9, 0.2}, {0.1, 0.4}, {0.3, 0.4}}, 0.4, 0.03);
    // Repeat the pattern with a blink and a wandering gap.
    double base = 0;
    while (base < 68) {
        for (const auto &s : g)
            w.gaze.push_back({t0 + base + s.t, true, s.x, s.y, 1.0 + 0.05 * std::sin(s.t)});
        base += g.back().t + 0.2;
        w.gaze.push_back({t0 + base - 0.1, false, 0, 0, 1.0});
        if (static_cast<int>(base) % 3 == 0)
            base += 0.6;
    }
    for (int i = 0; i <= 70 * 70; ++i)
        w.head.push_back({t0 + i / 70.0, Quat::axis_angle(0, 1, 0, 0.1 * std::sin(i / 70.0))});
    return w;
}

} // namespace

TEST_CASE("extract: full window, partial sensors, determinism, time shift")
{
    PhysioWindow w = synthetic_window(100.0);
    FeatureVector a = extract(w);
    CHECK(a.names.size() == 22);
    for (std::size_t i = 0; i < a.values.size(); ++i)
        CHECK_MESSAGE(a.values[i].has_value(), a.names[i]);
    FeatureVector again = extract(w);
    CHECK(again.values == a.values);

    PhysioWindow shifted = synthetic_window(5000.0);
    FeatureVector b = extract(shifted);
    for (std::size_t i = 0; i < a.values.size(); ++i)
        CHECK_MESSAGE(*b.values[i] == doctest::Approx(*a.values[i]).epsilon(1e-6), a.names[i]);

    PhysioWindow nogaze = w;
    nogaze.gaze.clear();
    FeatureVector c = extract(nogaze);
    for (const char *n : {"n_blinks", "mean_fixation_dur", "pupil_mean", "mean_saccade_angle"})
        CHECK_FALSE(c.get(n));
    for (const char *n : {"breath_rate", "eda_n_peaks", "head_travel", "reading_duration"})
        CHECK(c.get(n));
}

TEST_CASE("extract: CSV round trip with missing values")
{
    FeatureVector a = extract(synthetic_window(0));
    a.subject = "s03";
    a.label = "A";
    a.story = "happy";
    a.values[1] = std::nullopt;
    std::stringstream ss;
    write_feature_csv(ss, {a, a});
    auto rows = read_feature_csv(ss);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].values == a.values);
    CHECK(rows[1].subject == "s03");
    CHECK(*rows[1].label == "A");
    CHECK(rows[1].t1 == a.t1);
    std::stringstream bad("x,subject,label,story,t0,t1\n1,2\n");
    CHECK_THROWS_AS(read_feature_csv(bad), pif::Error);
}
