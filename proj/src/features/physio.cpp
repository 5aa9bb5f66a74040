#include <algorithm>
#include <cmath>

#include "common/error.hpp"
#include "features/features.hpp"

namespace pif::features {

namespace {

std::size_t decimation_factor(double fs, double target)
{
    if (!(fs > 0))
        throw invalid_argument("sampling rate must be positive");
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fs / target + 1e-9)));
}

double norm2(const std::vector<double> &v)
{
    double s = 0;
    for (double x : v)
        s += x * x;
    return std::sqrt(s);
}

} // namespace

// EDA ------------------------------------------------------------------------------

EdaDecomposition eda_decompose(const std::vector<double> &eda, double fs, const EdaOptions &opt)
{
    EdaDecomposition d;
    std::size_t q = decimation_factor(fs, opt.work_rate);
    d.rate = fs / static_cast<double>(q);
    d.signal = block_decimate(eda, q);
    if (d.signal.size() < 8)
        return d;
    std::size_t pad = std::min(d.signal.size() - 1, static_cast<std::size_t>(d.rate / opt.tonic_cutoff));
    d.tonic = sosfiltfilt(butter_lowpass(2, opt.tonic_cutoff, d.rate), d.signal, pad);
    d.phasic.resize(d.signal.size());
    for (std::size_t i = 0; i < d.signal.size(); ++i)
        d.phasic[i] = d.signal[i] - d.tonic[i];

    PeakOptions po;
    po.min_prominence = opt.min_prominence;
    po.min_distance = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(opt.min_peak_distance * d.rate)));
    std::vector<Peak> candidates = find_peaks(d.phasic, po);

    // Ripples in the undershoot the tonic filter leaves behind a response
    // are not responses: a peak must sit above the tonic level and rise in
    // the raw signal.
    auto back = static_cast<std::size_t>(std::lround(opt.onset_search * d.rate));
    std::size_t prev = 0;
    for (const Peak &p : candidates) {
        std::size_t lo = std::max(prev, p.index > back ? p.index - back : 0);
        std::size_t onset = lo;
        for (std::size_t i = lo; i <= p.index; ++i)
            if (d.phasic[i] < d.phasic[onset])
                onset = i;
        double amp = d.signal[p.index] - d.signal[onset];
        if (d.phasic[p.index] <= 0.0 || amp < opt.min_prominence)
            continue;
        d.peaks.push_back(p);
        d.amplitudes.push_back(amp);
        prev = p.index;
    }
    return d;
}

std::vector<double> scr_kernel(double rate, double tau_rise, double tau_decay, double length_s)
{
    if (!(tau_decay > tau_rise && tau_rise > 0))
        throw invalid_argument("SCR kernel needs 0 < tau_rise < tau_decay");
    auto n = static_cast<std::size_t>(std::ceil(length_s * rate));
    double t_peak = std::log(tau_decay / tau_rise) * tau_rise * tau_decay / (tau_decay - tau_rise);
    double peak = std::exp(-t_peak / tau_decay) - std::exp(-t_peak / tau_rise);
    std::vector<double> k(n);
    for (std::size_t i = 0; i < n; ++i) {
        double t = static_cast<double>(i) / rate;
        k[i] = (std::exp(-t / tau_decay) - std::exp(-t / tau_rise)) / peak;
    }
    return k;
}

namespace {

std::vector<double> convolve(const std::vector<double> &k, const std::vector<double> &d)
{
    std::size_t n = d.size();
    std::vector<double> y(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        if (d[j] == 0.0)
            continue;
        std::size_t m = std::min(k.size(), n - j);
        for (std::size_t i = 0; i < m; ++i)
            y[j + i] += k[i] * d[j];
    }
    return y;
}

std::vector<double> correlate(const std::vector<double> &k, const std::vector<double> &r)
{
    std::size_t n = r.size();
    std::vector<double> g(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t m = std::min(k.size(), n - j);
        double s = 0;
        for (std::size_t i = 0; i < m; ++i)
            s += k[i] * r[j + i];
        g[j] = s;
    }
    return g;
}

} // namespace

SmnaResult smna(const std::vector<double> &phasic, double rate, const EdaOptions &opt)
{
    SmnaResult res;
    std::size_t q = decimation_factor(rate, opt.smna_rate);
    res.rate = rate / static_cast<double>(q);
    std::vector<double> p = block_decimate(phasic, q);
    std::size_t n = p.size();
    res.driver.assign(n, 0.0);
    double pn = norm2(p);
    if (n == 0 || pn == 0.0)
        return res;
    std::vector<double> k = scr_kernel(res.rate, opt.tau_rise, opt.tau_decay, 10.0 * opt.tau_decay);
    double l1 = 0;
    for (double v : k)
        l1 += std::abs(v);
    double step = 1.0 / (l1 * l1); // ||K||_2 <= ||k||_1

    std::vector<double> d(n, 0.0), y(n, 0.0), prev(n, 0.0);
    double t = 1.0;
    int it = 0;
    for (; it < opt.smna_max_iter; ++it) {
        std::vector<double> r = convolve(k, y);
        for (std::size_t i = 0; i < n; ++i)
            r[i] -= p[i];
        std::vector<double> g = correlate(k, r);
        prev = d;
        for (std::size_t i = 0; i < n; ++i)
            d[i] = std::max(0.0, y[i] - step * g[i]);
        double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        double mom = (t - 1.0) / t_next;
        double change = 0, size = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double delta = d[i] - prev[i];
            y[i] = d[i] + mom * delta;
            change += delta * delta;
            size += d[i] * d[i];
        }
        t = t_next;
        if (it > 0 && std::sqrt(change) <= opt.smna_tolerance * std::max(std::sqrt(size), 1e-12))
            break;
    }
    std::vector<double> r = convolve(k, d);
    for (std::size_t i = 0; i < n; ++i)
        r[i] -= p[i];
    res.driver = std::move(d);
    res.iterations = it + 1;
    res.relative_residual = norm2(r) / pn;
    return res;
}

EdaStats eda_features(const std::vector<double> &eda, double fs, const EdaOptions &opt)
{
    EdaStats s;
    EdaDecomposition d = eda_decompose(eda, fs, opt);
    if (d.phasic.empty())
        return s;
    s.n_peaks = static_cast<int>(d.peaks.size());
    if (!d.amplitudes.empty())
        s.mean_peak_amp = mean(d.amplitudes);
    SmnaResult m = smna(d.phasic, d.rate, opt);
    s.mean_smna = m.driver.empty() ? 0.0 : mean(m.driver);
    return s;
}

// Breathing ------------------------------------------------------------------------

BreathCycles breathing_cycles(const std::vector<double> &signal, double fs, const BreathOptions &opt)
{
    BreathCycles c;
    std::size_t q = decimation_factor(fs, opt.work_rate);
    c.rate = fs / static_cast<double>(q);
    std::vector<double> x = block_decimate(signal, q);
    if (x.size() < 8)
        return c;
    double m = mean(x);
    for (double &v : x)
        v -= m;
    std::size_t pad = std::min(x.size() - 1, static_cast<std::size_t>(3.0 * c.rate / opt.low));
    c.filtered = sosfiltfilt(butter_bandpass(opt.order, opt.low, opt.high, c.rate), x, pad);
    // The narrow band-pass delimits cycles; the peak itself is located on a
    // wide low-pass of the signal so that cycle-to-cycle variation in length
    // survives.
    double shape_cut = std::min(opt.shape_cutoff, 0.45 * c.rate);
    std::vector<double> shape = sosfiltfilt(butter_lowpass(opt.order, shape_cut, c.rate), x, pad);

    // One cycle per positive lobe; lobes cut by the window edges are
    // incomplete and skipped.
    const auto &y = c.filtered;
    std::size_t n = y.size(), i = 0;
    while (i < n) {
        if (y[i] <= 0) {
            ++i;
            continue;
        }
        std::size_t start = i;
        while (i < n && y[i] > 0)
            ++i;
        if (start == 0 || i == n)
            continue;
        std::size_t best = start;
        for (std::size_t k = start; k < i; ++k)
            if (shape[k] > shape[best])
                best = k;
        double pos = refine_peak(shape, best);
        c.peak_times.push_back((pos * static_cast<double>(q) + 0.5 * static_cast<double>(q - 1)) / fs);
    }
    return c;
}

std::pair<Missing, Missing> rate_and_rmssd(const std::vector<double> &peak_times)
{
    if (peak_times.size() < 3)
        return {std::nullopt, std::nullopt};
    std::vector<double> ibi;
    for (std::size_t i = 1; i < peak_times.size(); ++i)
        ibi.push_back(peak_times[i] - peak_times[i - 1]);
    double s = 0;
    for (std::size_t i = 1; i < ibi.size(); ++i)
        s += (ibi[i] - ibi[i - 1]) * (ibi[i] - ibi[i - 1]);
    return {60.0 / mean(ibi), std::sqrt(s / static_cast<double>(ibi.size() - 1))};
}

BreathStats breathing_features(const std::vector<double> &breathing, double fs, const BreathOptions &opt)
{
    BreathStats s;
    BreathCycles raw = breathing_cycles(breathing, fs, opt);
    std::tie(s.rate_bpm, s.rmssd) = rate_and_rmssd(raw.peak_times);

    // The piezo belt responds to changes in circumference; its running
    // integral tracks the circumference itself.
    double m = mean(breathing);
    std::vector<double> centered(breathing);
    for (double &v : centered)
        v -= m;
    BreathCycles integ = breathing_cycles(cumulative_integral(centered, fs), fs, opt);
    std::tie(s.rate_bpm_int, s.rmssd_int) = rate_and_rmssd(integ.peak_times);
    return s;
}

} // namespace pif::features
