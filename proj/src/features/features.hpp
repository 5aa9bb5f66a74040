#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "features/dsp.hpp"

namespace pif::features {

using Missing = std::optional<double>;

// Gaze -------------------------------------------------------------------------

struct GazeSample {
    double t = 0.0;
    bool on_screen = false;
    double x = 0.0, y = 0.0; // display plane, [0,1]^2; meaningless when off-screen
    double pupil = 1.0;      // relative to the calibration baseline
};

using GazeTrace = std::vector<GazeSample>;

// True when (x, y) lies within the unit display inflated by 10% per side.
bool within_display(double x, double y);

struct OffScreenGap {
    double start = 0.0; // last on-screen sample before (or first sample)
    double end = 0.0;   // first on-screen sample after (or last sample)
    double duration() const { return end - start; }
};

// Intervals with no on-screen point: between consecutive on-screen samples
// separated by off-screen samples, plus leading/trailing off-screen runs.
std::vector<OffScreenGap> offscreen_gaps(const GazeTrace &g);

constexpr double kBlinkMin = 0.050;
constexpr double kBlinkMax = 0.500;

struct BlinkStats {
    int count = 0;
    Missing mean_duration;
};

BlinkStats detect_blinks(const GazeTrace &g);
double mind_wandering(const GazeTrace &g);

struct IdtOptions {
    double max_dispersion = 0.02; // (max x - min x) + (max y - min y)
    double min_duration = 0.100;  // s
};

struct Fixation {
    std::size_t first = 0, last = 0; // sample indices, inclusive
    double start = 0.0, end = 0.0;
    double cx = 0.0, cy = 0.0;
    double duration() const { return end - start; }
};

struct Saccade {
    std::size_t i0 = 0, i1 = 0;    // sample indices of the endpoints
    double start = 0.0, end = 0.0; // end of a fixation, start of the next
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
    double duration() const { return end - start; }
    double length() const;
    double angle_deg() const; // |atan2(dy, dx)| in [0, 180]; 0 = left to right
};

std::vector<Fixation> detect_fixations(const GazeTrace &g, const IdtOptions &opt = {});
std::vector<Saccade> saccades_between(const GazeTrace &g, const std::vector<Fixation> &fix);

constexpr double kSplitSaccadeLimit = 0.350;

// Saccades longer than the limit are cut at every multiple of it; the
// pieces' endpoints follow the gaze path (linear interpolation between
// on-screen samples). Shorter saccades pass through unchanged.
std::vector<Saccade> split_saccades(const GazeTrace &g, const std::vector<Saccade> &sac,
                                    double limit = kSplitSaccadeLimit);

struct FixSacStats {
    int n_fixations = 0;
    Missing mean_fixation_dur;
    int n_saccades = 0;
    Missing mean_saccade_len;
    Missing mean_saccade_angle;
    int n_split_saccades = 0;
    Missing mean_split_saccade_len;
};

FixSacStats fixations_saccades(const GazeTrace &g, const IdtOptions &opt = {});

struct PupilStats {
    Missing mean, sd;
};

PupilStats pupil_stats(const GazeTrace &g);

// Head -------------------------------------------------------------------------

struct Quat {
    double w = 1, x = 0, y = 0, z = 0;
    double norm() const;
    Quat conj() const { return {w, -x, -y, -z}; }
    static Quat axis_angle(double ax, double ay, double az, double angle);
};

Quat operator*(const Quat &a, const Quat &b);

struct HeadSample {
    double t = 0.0;
    Quat q;
};

using HeadTrace = std::vector<HeadSample>;

// Rotation angle between two orientations, in [0, pi]; q and -q coincide.
double geodesic(const Quat &a, const Quat &b);

struct HeadStats {
    Missing travel, mean_speed;
};

// Throws InvalidArgument on a quaternion whose norm is off by more than 1e-6.
HeadStats head_motion(const HeadTrace &h);

// EDA --------------------------------------------------------------------------

struct EdaOptions {
    double work_rate = 16.0;        // Hz after block decimation
    double tonic_cutoff = 0.05;     // Hz
    double min_prominence = 0.01;   // µS
    double min_peak_distance = 1.0; // s
    double onset_search = 4.0;      // s before a peak
    double smna_rate = 8.0;         // Hz
    double tau_rise = 0.7, tau_decay = 2.0;
    double smna_tolerance = 1e-4;
    int smna_max_iter = 5000;
};

struct EdaDecomposition {
    double rate = 0.0;
    std::vector<double> signal, tonic, phasic;
    std::vector<Peak> peaks;
    std::vector<double> amplitudes; // raw rise from onset to peak, µS
};

EdaDecomposition eda_decompose(const std::vector<double> &eda, double fs, const EdaOptions &opt = {});

// Biexponential impulse response scaled to a unit peak, sampled at `rate`.
std::vector<double> scr_kernel(double rate, double tau_rise, double tau_decay, double length_s);

struct SmnaResult {
    double rate = 0.0;
    std::vector<double> driver; // non-negative
    int iterations = 0;
    double relative_residual = 0.0;
};

// Non-negative deconvolution of `phasic` with the SCR kernel by
// accelerated projected gradient.
SmnaResult smna(const std::vector<double> &phasic, double rate, const EdaOptions &opt = {});

struct EdaStats {
    int n_peaks = 0;
    Missing mean_peak_amp, mean_smna;
};

EdaStats eda_features(const std::vector<double> &eda, double fs, const EdaOptions &opt = {});

// Breathing ------------------------------------------------------------------------

struct BreathOptions {
    double work_rate = 16.0;
    double low = 0.1, high = 0.35;
    int order = 4;
    double shape_cutoff = 1.0; // Hz, low-pass used to place peaks within a cycle
};

struct BreathCycles {
    double rate = 0.0;
    std::vector<double> filtered;
    std::vector<double> peak_times; // s from window start, sub-sample refined
};

BreathCycles breathing_cycles(const std::vector<double> &signal, double fs, const BreathOptions &opt = {});

struct BreathStats {
    Missing rate_bpm, rmssd, rate_bpm_int, rmssd_int;
};

BreathStats breathing_features(const std::vector<double> &breathing, double fs, const BreathOptions &opt = {});

// Rate and RMSSD from inter-peak intervals; missing below 2 cycles.
std::pair<Missing, Missing> rate_and_rmssd(const std::vector<double> &peak_times);

// Registry and extraction ---------------------------------------------------

struct PhysioWindow {
    double t0 = 0.0, t1 = 0.0;
    std::vector<double> eda;
    double eda_rate = 512.0;
    std::vector<double> breathing;
    double breathing_rate = 512.0;
    GazeTrace gaze;
    HeadTrace head;
};

const std::vector<std::string> &default_registry();

struct FeatureVector {
    std::vector<std::string> names;
    std::vector<Missing> values;
    double t0 = 0.0, t1 = 0.0;
    std::string subject;
    std::optional<std::string> label;
    std::string story; // window identifier (e.g. the story read)

    Missing get(const std::string &name) const;
    bool complete() const;
};

struct ExtractOptions {
    IdtOptions idt;
    EdaOptions eda;
    BreathOptions breath;
};

// Every default-registry feature; absent sensors yield missing entries.
FeatureVector extract(const PhysioWindow &w, const ExtractOptions &opt = {});

// CSV: registry names, then subject, label, story, t0, t1. Missing = NA.
void write_feature_csv(std::ostream &out, const std::vector<FeatureVector> &rows);
std::vector<FeatureVector> read_feature_csv(std::istream &in);

} // namespace pif::features
