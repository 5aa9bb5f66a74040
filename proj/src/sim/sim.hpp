#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "features/features.hpp"
#include "transport/recording.hpp"

namespace pif::sim {

struct Truth {
    double arousal = 0.5, valence = 0.5, difficulty = 0.5; // each in [0, 1]
    bool operator==(const Truth &) const = default;
};

struct Segment {
    std::string story; // window identifier, emitted as STORY:<story>
    std::string label; // class label for the window; defaults to the story
    double duration = 70.0;
    Truth truth;
    std::vector<std::string> tags; // context tags open for the whole segment
};

struct Scenario {
    std::vector<Segment> segments;
    double gap = 5.0; // rest between segments, s

    void validate() const;
    double total_duration() const;
};

// Six 70 s stories mirroring three contrasting pairs: boring/exciting
// (arousal), complicated/simple (difficulty), happy/sad (valence), each pole
// `separability` away from neutral (0.5 +/- 0.4 * separability).
Scenario paired_stories(double separability = 1.0);

std::string scenario_to_json(const Scenario &s);
Scenario scenario_from_json(const std::string &text);

struct SubjectProfile {
    std::string id = "s00";
    std::uint64_t seed = 1;

    double breath_rate = 15.0;     // bpm at valence 0.5
    double breath_gain = 5.0;      // bpm per unit valence
    double breath_jitter = 0.3;    // bpm, slow rate fluctuation
    double breath_amp = 1.0;
    double breath_noise = 0.05;    // pink noise SD relative to amplitude

    double eda_level = 5.0;        // µS
    double eda_walk = 0.003;       // µS per sqrt(s)
    double scr_rate = 1.0;         // per minute at arousal 0
    double scr_gain = 11.0;        // per minute per unit arousal
    double scr_amp = 0.3;          // µS, median
    double scr_refractory = 2.5;   // s

    double pupil_base = 1.0;
    double pupil_gain = 0.15;      // relative units per unit arousal
    double pupil_noise = 0.02;

    double fix_dur = 0.22;         // s, mean fixation at difficulty 0
    double fix_gain = 0.12;        // s per unit difficulty
    double blink_rate = 12.0;      // per minute
    double wander_rate = 0.5;      // per minute at difficulty 0
    double wander_gain = 4.0;      // per minute per unit difficulty

    double head_speed = 0.05;      // rad/s, typical angular speed at valence 0.5
    double head_gain = 0.8;        // relative change per unit valence
};

// Randomized baselines (+/- 50% where physiologically sensible) and
// per-construct gains jittered around the defaults.
SubjectProfile random_profile(const std::string &id, std::uint64_t seed);

constexpr double kSignalRate = 512.0;
constexpr double kGazeRate = 70.0;
constexpr double kStateRate = 4.0;

// Streams: "eda" and "breathing" at 512 Hz; "gaze" at 70 Hz with channels
// x, y, valid, pupil; "head" at 70 Hz with quaternion w, x, y, z; "truth"
// at 4 Hz with arousal, valence, difficulty; and the "pif-markers" stream:
// SUBJECT:<id>, STORY:<story>, LABEL:<label>, TRUTH:a=..,v=..,d=..,
// TAG_START/TAG_STOP per segment tag, END:<story>. Deterministic in the
// profile's seed.
transport::Recording generate(const SubjectProfile &profile, const Scenario &scenario);

struct Cohort {
    std::vector<SubjectProfile> profiles;
    std::vector<features::FeatureVector> rows; // one per subject and story
};

// Generates every subject (story order shuffled per subject), extracts one
// feature vector per story window. Subject i uses seed `seed + i`.
Cohort make_cohort(int n_subjects, const Scenario &scenario, std::uint64_t seed = 1, bool parallel = true);
Cohort make_cohort(std::vector<SubjectProfile> profiles, const Scenario &scenario, bool parallel = true);

// Construct name -> (class A label, class B label) for paired_stories.
// Class A is the high pole, so a posterior for A reads as the construct level.
struct ConstructDef {
    std::string name, class_a, class_b;
};
const std::vector<ConstructDef> &paired_constructs();

// Features the generator drives for each construct, with the sign of the
// association with class A.
std::map<std::string, int> planted_associations(const std::string &construct);

} // namespace pif::sim
