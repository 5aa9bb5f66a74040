#include "features/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numeric>

#include "common/error.hpp"

namespace pif::features {

namespace {

using cd = std::complex<double>;

// Left-half-plane poles of the unit-cutoff analog prototype.
std::vector<cd> prototype_poles(int n)
{
    std::vector<cd> p;
    for (int k = 0; k < n; ++k)
        p.push_back(std::polar(1.0, M_PI * (2.0 * k + n + 1) / (2.0 * n)));
    return p;
}

double prewarp(double f, double fs)
{
    return 2.0 * fs * std::tan(M_PI * f / fs);
}

cd bilinear(cd s, double fs)
{
    return (2.0 * fs + s) / (2.0 * fs - s);
}

void check_design(int order, double fs, std::initializer_list<double> cutoffs)
{
    if (order < 1 || order > 12)
        throw invalid_argument("filter order must be in 1..12");
    if (!(fs > 0))
        throw invalid_argument("sampling rate must be positive");
    for (double f : cutoffs)
        if (!(f > 0 && f < fs / 2))
            throw invalid_argument("cutoff must lie strictly between 0 and Nyquist");
}

// Groups digital poles into biquads. Conjugate pairs share a section; a
// lone real pole gets a first-order section. `zero_pair` gives each
// section's numerator.
Sos assemble(const std::vector<cd> &poles, const std::function<std::array<double, 3>(bool first_order)> &zero_pair)
{
    std::vector<cd> upper, real;
    for (const cd &p : poles) {
        if (std::abs(p.imag()) < 1e-12)
            real.push_back(p.real());
        else if (p.imag() > 0)
            upper.push_back(p);
    }
    Sos sos;
    for (const cd &p : upper) {
        Biquad q;
        q.a = {1.0, -2.0 * p.real(), std::norm(p)};
        q.b = zero_pair(false);
        sos.push_back(q);
    }
    for (std::size_t i = 0; i < real.size(); i += 2) {
        Biquad q;
        if (i + 1 < real.size()) {
            double r1 = real[i].real(), r2 = real[i + 1].real();
            q.a = {1.0, -(r1 + r2), r1 * r2};
            q.b = zero_pair(false);
        } else {
            q.a = {1.0, -real[i].real(), 0.0};
            q.b = zero_pair(true);
        }
        sos.push_back(q);
    }
    return sos;
}

void normalize_gain(Sos &sos, double f_ref, double fs)
{
    double g = sos_gain(sos, f_ref, fs);
    for (double &c : sos.front().b)
        c /= g;
}

} // namespace

Sos butter_lowpass(int order, double cutoff_hz, double fs)
{
    check_design(order, fs, {cutoff_hz});
    double w = prewarp(cutoff_hz, fs);
    std::vector<cd> poles;
    for (const cd &p : prototype_poles(order))
        poles.push_back(bilinear(w * p, fs));
    Sos sos = assemble(poles, [](bool first) {
        return first ? std::array<double, 3>{1.0, 1.0, 0.0} : std::array<double, 3>{1.0, 2.0, 1.0};
    });
    normalize_gain(sos, 0.0, fs);
    return sos;
}

Sos butter_highpass(int order, double cutoff_hz, double fs)
{
    check_design(order, fs, {cutoff_hz});
    double w = prewarp(cutoff_hz, fs);
    std::vector<cd> poles;
    for (const cd &p : prototype_poles(order))
        poles.push_back(bilinear(w / p, fs));
    Sos sos = assemble(poles, [](bool first) {
        return first ? std::array<double, 3>{1.0, -1.0, 0.0} : std::array<double, 3>{1.0, -2.0, 1.0};
    });
    normalize_gain(sos, fs / 2.0, fs);
    return sos;
}

Sos butter_bandpass(int order, double low_hz, double high_hz, double fs)
{
    check_design(order, fs, {low_hz, high_hz});
    if (!(low_hz < high_hz))
        throw invalid_argument("band-pass needs low < high");
    double w1 = prewarp(low_hz, fs), w2 = prewarp(high_hz, fs);
    double w0 = std::sqrt(w1 * w2), bw = w2 - w1;
    std::vector<cd> poles;
    for (const cd &p : prototype_poles(order)) {
        cd half = p * bw / 2.0;
        cd root = std::sqrt(half * half - w0 * w0);
        poles.push_back(bilinear(half + root, fs));
        poles.push_back(bilinear(half - root, fs));
    }
    // n zeros at DC and n at Nyquist: one of each per section.
    Sos sos = assemble(poles, [](bool) { return std::array<double, 3>{1.0, 0.0, -1.0}; });
    double f_center = fs / M_PI * std::atan(w0 / (2.0 * fs));
    normalize_gain(sos, f_center, fs);
    return sos;
}

double sos_gain(const Sos &sos, double f_hz, double fs)
{
    cd z = std::polar(1.0, 2.0 * M_PI * f_hz / fs);
    cd zi = 1.0 / z, zi2 = zi * zi;
    cd h = 1.0;
    for (const Biquad &q : sos)
        h *= (q.b[0] + q.b[1] * zi + q.b[2] * zi2) / (q.a[0] + q.a[1] * zi + q.a[2] * zi2);
    return std::abs(h);
}

namespace {

using State = std::vector<std::array<double, 2>>;

std::vector<double> run(const Sos &sos, const std::vector<double> &x, State st)
{
    std::vector<double> y(x);
    for (std::size_t s = 0; s < sos.size(); ++s) {
        const Biquad &q = sos[s];
        double z1 = st[s][0], z2 = st[s][1];
        for (double &v : y) {
            double in = v;
            double out = q.b[0] * in + z1;
            z1 = q.b[1] * in - q.a[1] * out + z2;
            z2 = q.b[2] * in - q.a[2] * out;
            v = out;
        }
    }
    return y;
}

// Section states for a unit step already in steady state.
State steady_state(const Sos &sos)
{
    State zi(sos.size());
    double scale = 1.0;
    for (std::size_t s = 0; s < sos.size(); ++s) {
        const Biquad &q = sos[s];
        double B1 = q.b[1] - q.a[1] * q.b[0];
        double B2 = q.b[2] - q.a[2] * q.b[0];
        double z1 = (B1 + B2) / (1.0 + q.a[1] + q.a[2]);
        double z2 = B2 - q.a[2] * z1;
        zi[s] = {z1 * scale, z2 * scale};
        scale *= (q.b[0] + q.b[1] + q.b[2]) / (1.0 + q.a[1] + q.a[2]);
    }
    return zi;
}

State scaled(const State &zi, double k)
{
    State out = zi;
    for (auto &s : out) {
        s[0] *= k;
        s[1] *= k;
    }
    return out;
}

} // namespace

std::vector<double> sosfilt(const Sos &sos, const std::vector<double> &x)
{
    return run(sos, x, State(sos.size(), {0.0, 0.0}));
}

std::vector<double> sosfiltfilt(const Sos &sos, const std::vector<double> &x, std::size_t padlen)
{
    if (x.empty())
        return {};
    if (padlen == 0)
        padlen = 3 * (2 * sos.size() + 1);
    padlen = std::min(padlen, x.size() - 1);
    std::size_t n = x.size();
    std::vector<double> ext;
    ext.reserve(n + 2 * padlen);
    for (std::size_t i = padlen; i >= 1; --i)
        ext.push_back(2.0 * x[0] - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= padlen; ++i)
        ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

    State zi = steady_state(sos);
    std::vector<double> y = run(sos, ext, scaled(zi, ext.front()));
    std::reverse(y.begin(), y.end());
    y = run(sos, y, scaled(zi, y.front()));
    std::reverse(y.begin(), y.end());
    return {y.begin() + static_cast<std::ptrdiff_t>(padlen), y.begin() + static_cast<std::ptrdiff_t>(padlen + n)};
}

std::vector<double> block_decimate(const std::vector<double> &x, std::size_t factor)
{
    if (factor <= 1)
        return x;
    std::vector<double> out;
    out.reserve(x.size() / factor);
    for (std::size_t i = 0; i + factor <= x.size(); i += factor) {
        double s = 0;
        for (std::size_t k = 0; k < factor; ++k)
            s += x[i + k];
        out.push_back(s / static_cast<double>(factor));
    }
    return out;
}

std::vector<double> cumulative_integral(const std::vector<double> &x, double fs)
{
    std::vector<double> out(x.size(), 0.0);
    for (std::size_t i = 1; i < x.size(); ++i)
        out[i] = out[i - 1] + 0.5 * (x[i] + x[i - 1]) / fs;
    return out;
}

std::vector<Peak> find_peaks(const std::vector<double> &x, const PeakOptions &opt)
{
    std::vector<std::size_t> idx;
    std::size_t n = x.size();
    for (std::size_t i = 1; i + 1 < n;) {
        if (x[i - 1] < x[i]) {
            std::size_t ahead = i + 1;
            while (ahead + 1 < n && x[ahead] == x[i])
                ++ahead;
            if (x[ahead] < x[i]) {
                idx.push_back((i + ahead - 1) / 2);
                i = ahead;
                continue;
            }
        }
        ++i;
    }

    if (opt.min_distance > 1 && idx.size() > 1) {
        std::vector<std::size_t> order(idx.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[idx[a]] < x[idx[b]]; });
        std::vector<bool> keep(idx.size(), true);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            std::size_t j = *it;
            if (!keep[j])
                continue;
            for (std::size_t k = j; k-- > 0 && idx[j] - idx[k] < opt.min_distance;)
                keep[k] = false;
            for (std::size_t k = j + 1; k < idx.size() && idx[k] - idx[j] < opt.min_distance; ++k)
                keep[k] = false;
        }
        std::vector<std::size_t> kept;
        for (std::size_t j = 0; j < idx.size(); ++j)
            if (keep[j])
                kept.push_back(idx[j]);
        idx.swap(kept);
    }

    std::vector<Peak> out;
    for (std::size_t p : idx) {
        double h = x[p];
        std::size_t lb = p, i = p;
        double left_min = h;
        while (i > 0) {
            --i;
            if (x[i] > h)
                break;
            if (x[i] < left_min) {
                left_min = x[i];
                lb = i;
            }
        }
        std::size_t rb = p;
        double right_min = h;
        for (i = p + 1; i < n; ++i) {
            if (x[i] > h)
                break;
            if (x[i] < right_min) {
                right_min = x[i];
                rb = i;
            }
        }
        Peak pk{p, h - std::max(left_min, right_min), lb, rb};
        if (pk.prominence >= opt.min_prominence)
            out.push_back(pk);
    }
    return out;
}

double refine_peak(const std::vector<double> &x, std::size_t i)
{
    if (i == 0 || i + 1 >= x.size())
        return static_cast<double>(i);
    double y0 = x[i - 1], y1 = x[i], y2 = x[i + 1];
    double d = y0 - 2.0 * y1 + y2;
    if (d == 0.0)
        return static_cast<double>(i);
    return static_cast<double>(i) + 0.5 * (y0 - y2) / d;
}

double mean(const std::vector<double> &x)
{
    if (x.empty())
        return std::nan("");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double pstdev(const std::vector<double> &x)
{
    if (x.empty())
        return std::nan("");
    double m = mean(x), s = 0;
    for (double v : x)
        s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size()));
}

double median(std::vector<double> x)
{
    if (x.empty())
        return std::nan("");
    std::sort(x.begin(), x.end());
    std::size_t n = x.size();
    return n % 2 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

} // namespace pif::features
