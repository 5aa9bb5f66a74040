#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace pif::features {

// One biquad: b0 b1 b2 / 1 a1 a2.
struct Biquad {
    std::array<double, 3> b{};
    std::array<double, 3> a{1.0, 0.0, 0.0};
};

using Sos = std::vector<Biquad>;

// Digital Butterworth designs. `order` is the prototype order: a band-pass
// of order n has 2n poles (n sections).
Sos butter_lowpass(int order, double cutoff_hz, double fs);
Sos butter_highpass(int order, double cutoff_hz, double fs);
Sos butter_bandpass(int order, double low_hz, double high_hz, double fs);

// |H(e^{jw})| at frequency f.
double sos_gain(const Sos &sos, double f_hz, double fs);

std::vector<double> sosfilt(const Sos &sos, const std::vector<double> &x);
// Forward-backward filtering with odd-extension padding and steady-state
// initial conditions; zero phase, squared magnitude response.
std::vector<double> sosfiltfilt(const Sos &sos, const std::vector<double> &x, std::size_t padlen = 0);

// Mean over consecutive blocks of `factor` samples; a short tail block is
// dropped.
std::vector<double> block_decimate(const std::vector<double> &x, std::size_t factor);

// Running trapezoidal integral scaled by 1/fs, starting at 0.
std::vector<double> cumulative_integral(const std::vector<double> &x, double fs);

struct PeakOptions {
    double min_prominence = 0.0;
    std::size_t min_distance = 1; // samples
};

struct Peak {
    std::size_t index = 0;
    double prominence = 0.0;
    std::size_t left_base = 0;
    std::size_t right_base = 0;
};

// Local maxima (flat tops resolved to their middle), thinned by distance
// with higher peaks winning, then filtered by topographic prominence.
std::vector<Peak> find_peaks(const std::vector<double> &x, const PeakOptions &opt = {});

// Sub-sample position of a maximum at index i by a parabola through its
// neighbours; returns i itself at the edges.
double refine_peak(const std::vector<double> &x, std::size_t i);

double mean(const std::vector<double> &x);
double pstdev(const std::vector<double> &x); // population
double median(std::vector<double> x);

} // namespace pif::features
