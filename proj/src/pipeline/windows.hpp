#pragma once

#include <optional>
#include <string>
#include <vector>

#include "features/features.hpp"
#include "transport/recording.hpp"

namespace pif::pipeline {

// Stream names used by recordings that carry physiology.
struct StreamNames {
    std::string eda = "eda";
    std::string breathing = "breathing";
    std::string gaze = "gaze"; // channels x, y, valid, pupil
    std::string head = "head"; // channels w, x, y, z
    std::string markers = "pif-markers";
};

enum class Signal { Eda, Breathing, Gaze, Head };

// Appends one sample of the given stream to a window (gaze samples become
// on-screen only when valid and within the display).
void append_sample(features::PhysioWindow &w, Signal which, const transport::Sample &s);

struct LabeledWindow {
    features::PhysioWindow window;
    std::string story;
    std::optional<std::string> label;
};

// Windows run from STORY:<id> to the matching END:<id>, the next STORY
// marker, or the end of the recording. A LABEL:<label> marker inside the
// window sets its label.
std::vector<LabeledWindow> story_windows(const transport::Recording &rec, const StreamNames &names = {});

// Windows from STORY markers, extracted; subject from the recording
// header's "subject" entry (or SUBJECT:<id> marker).
std::vector<features::FeatureVector> extract_recording(const transport::Recording &rec,
                                                       const features::ExtractOptions &opt = {},
                                                       const StreamNames &names = {});

} // namespace pif::pipeline
