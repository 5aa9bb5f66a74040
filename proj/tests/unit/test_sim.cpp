#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "classify/classify.hpp"
#include "common/error.hpp"
#include "pipeline/windows.hpp"
#include "sim/sim.hpp"

using namespace pif;
using namespace pif::sim;

namespace {

template <class F> Error::Category category_of(F &&f)
{
    try {
        f();
    } catch (const Error &e) {
        return e.category();
    }
    FAIL("no error raised");
    return Error::Category::Runtime;
}

Scenario single(Truth t, double duration = 70.0)
{
    Scenario s;
    s.segments.push_back({"probe", "probe", duration, t, {}});
    return s;
}

features::FeatureVector extract_single(const SubjectProfile &p, Truth t)
{
    auto rows = pipeline::extract_recording(generate(p, single(t)));
    REQUIRE(rows.size() == 1);
    return rows[0];
}

std::string serialize(const transport::Recording &rec)
{
    std::ostringstream os;
    transport::write_recording(os, rec);
    return os.str();
}

double loso_accuracy(const Cohort &c, const ConstructDef &def)
{
    return classify::loso_cv(classify::dataset_from_features(c.rows, def.class_a, def.class_b, def.name), false)
        .accuracy;
}

// Every feature weighted at least as heavily as the third-largest weight
// must be a planted one, with the planted sign.
void check_top_weights(const classify::LosoResult &r, const std::vector<std::string> &registry,
                       const std::map<std::string, int> &planted)
{
    std::vector<double> mags;
    for (double w : r.weights)
        mags.push_back(std::abs(w));
    std::sort(mags.rbegin(), mags.rend());
    double third = mags.at(2);
    for (std::size_t j = 0; j < registry.size(); ++j) {
        if (std::abs(r.weights[j]) < third - 1e-12)
            continue;
        INFO(registry[j] << " weight " << r.weights[j]);
        auto it = planted.find(registry[j]);
        REQUIRE(it != planted.end());
        CHECK((r.weights[j] > 0 ? 1 : -1) == it->second);
    }
}

} // namespace

TEST_CASE("sim: scenarios")
{
    Scenario s = paired_stories(1.0);
    REQUIRE(s.segments.size() == 6);
    CHECK(s.total_duration() == doctest::Approx(5 + 6 * 75.0));
    CHECK(s.segments[0].truth.arousal == doctest::Approx(0.1));
    CHECK(s.segments[1].truth.arousal == doctest::Approx(0.9));
    CHECK(paired_stories(0.0).segments[0].truth == paired_stories(0.0).segments[1].truth);
    CHECK(category_of([] { paired_stories(1.5); }) == Error::Category::InvalidArgument);

    s.segments[2].tags = {"DUNGEON"};
    Scenario back = scenario_from_json(scenario_to_json(s));
    REQUIRE(back.segments.size() == 6);
    CHECK(back.segments[2].tags == std::vector<std::string>{"DUNGEON"});
    CHECK(back.segments[4].truth == s.segments[4].truth);
    CHECK(category_of([] { scenario_from_json("{\"segments\": []}"); }) == Error::Category::Validation);
    CHECK(category_of([] { scenario_from_json(R"({"segments": [{"story": "x", "truth": {"arousal": 2}}]})"); }) ==
          Error::Category::Validation);
    CHECK(category_of([] { scenario_from_json("not json"); }) == Error::Category::Validation);

    for (const auto &def : paired_constructs())
        for (const auto &[name, sign] : planted_associations(def.name)) {
            const auto &reg = features::default_registry();
            CHECK(std::find(reg.begin(), reg.end(), name) != reg.end());
            CHECK(std::abs(sign) == 1);
        }
    CHECK(category_of([] { planted_associations("boredom"); }) == Error::Category::InvalidArgument);
}

TEST_CASE("sim: same seed gives a byte-identical recording")
{
    Scenario s = paired_stories(1.0);
    SubjectProfile p = random_profile("s01", 7);
    std::string a = serialize(generate(p, s));
    CHECK(a == serialize(generate(p, s)));
    CHECK(a != serialize(generate(random_profile("s01", 8), s)));

    transport::Recording rec = generate(p, s);
    CHECK(rec.header.meta.at("subject") == "s01");
    for (const char *name : {"eda", "breathing", "gaze", "head", "truth", "pif-markers"})
        CHECK(rec.stream_index(name).has_value());
    double last = -1;
    bool ordered = true;
    for (const auto &rs : rec.samples) {
        ordered = ordered && rs.sample.timestamp >= last;
        last = rs.sample.timestamp;
    }
    CHECK(ordered);
    CHECK(rec.samples_of("eda").size() == static_cast<std::size_t>(s.total_duration() * kSignalRate));
}

TEST_CASE("sim: story windows carry labels and exact spans")
{
    Scenario s = paired_stories(1.0);
    s.segments[1].label = "thrilling";
    s.segments[3].tags = {"DUNGEON", "DARK"};
    transport::Recording rec = generate(random_profile("s03", 3), s);
    auto windows = pipeline::story_windows(rec);
    REQUIRE(windows.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(windows[i].story == s.segments[i].story);
        CHECK(windows[i].window.t0 == doctest::Approx(5 + 75.0 * static_cast<double>(i)));
        CHECK(windows[i].window.t1 - windows[i].window.t0 == doctest::Approx(70.0));
        CHECK(windows[i].window.eda.size() == 70 * 512);
        CHECK(windows[i].window.breathing.size() == 70 * 512);
        CHECK(windows[i].window.gaze.size() == 70 * 70);
        CHECK(windows[i].window.head.size() == 70 * 70);
    }
    CHECK(windows[1].label == "thrilling");
    CHECK(windows[0].label == "boring");

    auto markers = rec.samples_of("pif-markers");
    auto has = [&](const std::string &m) {
        return std::any_of(markers.begin(), markers.end(), [&](const auto &x) { return x.marker == m; });
    };
    CHECK(has("SUBJECT:s03"));
    CHECK(has("TAG_START:DUNGEON"));
    CHECK(has("TAG_STOP:DARK"));
    CHECK(has("TRUTH:arousal=0.5,valence=0.5,difficulty=0.9"));

    auto rows = pipeline::extract_recording(rec);
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].subject == "s03");
    CHECK(rows[1].label == "thrilling");

    // A window without an END marker runs to the end of the recording.
    transport::Recording open;
    std::size_t mk = open.add_stream(transport::StreamInfo{"pif-markers", transport::StreamKind::Marker, 1, 0, {}, "m"}.normalized());
    std::size_t e = open.add_stream(transport::StreamInfo{"eda", transport::StreamKind::Signal, 1, 4, {"eda"}, "e"}.normalized());
    open.samples.push_back({mk, transport::Sample::label(1.0, "STORY:a")});
    for (int i = 0; i < 40; ++i)
        open.samples.push_back({e, transport::Sample::signal(i * 0.25, {1.0})});
    open.samples.push_back({mk, transport::Sample::label(4.0, "STORY:b")});
    auto w = pipeline::story_windows(open);
    REQUIRE(w.size() == 2);
    CHECK(w[0].window.eda.size() == 12);
    CHECK(w[1].story == "b");
    CHECK(w[1].window.eda.size() == 24);
    CHECK(w[1].label == "b");
}

TEST_CASE("sim: arousal drives skin conductance responses")
{
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SubjectProfile p;
        p.seed = seed;
        double low = extract_single(p, {0.0, 0.5, 0.5}).get("eda_n_peaks").value();
        double high = extract_single(p, {1.0, 0.5, 0.5}).get("eda_n_peaks").value();
        INFO("seed " << seed << ": " << low << " vs " << high);
        CHECK(high - low >= 3);
    }
}

TEST_CASE("sim: expected response count is monotone in arousal")
{
    // Common random numbers across levels keep the comparison tight.
    std::vector<double> mean;
    for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        double sum = 0;
        for (std::uint64_t seed = 1; seed <= 12; ++seed) {
            SubjectProfile p = random_profile("m", seed);
            sum += extract_single(p, {a, 0.5, 0.5}).get("eda_n_peaks").value();
        }
        mean.push_back(sum / 12);
    }
    for (std::size_t i = 1; i < mean.size(); ++i) {
        INFO("level " << i << ": " << mean[i - 1] << " -> " << mean[i]);
        CHECK(mean[i] >= mean[i - 1]);
    }
}

TEST_CASE("sim: neutral valence breathes at the baseline rate")
{
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SubjectProfile p = random_profile("b", seed);
        auto fv = extract_single(p, {0.5, 0.5, 0.5});
        INFO("seed " << seed);
        CHECK(std::abs(fv.get("breath_rate").value() - p.breath_rate) <= 0.5);
        CHECK(std::abs(fv.get("breath_rate_int").value() - p.breath_rate) <= 0.5);
    }
}

TEST_CASE("sim: cohort study recovers the planted constructs")
{
    Cohort c = make_cohort(14, paired_stories(1.0), 1);
    CHECK(c.profiles.size() == 14);
    CHECK(c.rows.size() == 14 * 6);
    for (const auto &def : paired_constructs()) {
        INFO(def.name);
        classify::Dataset d = classify::dataset_from_features(c.rows, def.class_a, def.class_b, def.name);
        classify::LosoResult r = classify::loso_cv(d, false);
        CHECK(r.accuracy >= 0.90);
        check_top_weights(r, d.registry, planted_associations(def.name));
    }
}

TEST_CASE("sim: no separability means chance accuracy")
{
    // A single 28-decision cohort has SD ~0.17 around chance; the mean over
    // independent cohorts and constructs is what is pinned.
    double sum = 0;
    int n = 0;
    for (std::uint64_t seed : {11, 22, 33, 44}) {
        Cohort c = make_cohort(14, paired_stories(0.0), seed);
        for (const auto &def : paired_constructs()) {
            sum += loso_accuracy(c, def);
            ++n;
        }
    }
    CHECK(std::abs(sum / n - 0.5) <= 0.15);
}

TEST_CASE("sim: per-subject baseline shifts leave accuracy unchanged")
{
    std::vector<SubjectProfile> base, shifted;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> f(0.5, 1.5);
    for (int i = 0; i < 14; ++i) {
        SubjectProfile p = random_profile("s" + std::to_string(i + 1), 300 + static_cast<std::uint64_t>(i));
        base.push_back(p);
        double k = f(rng);
        p.eda_level *= k;
        p.pupil_base *= k;
        p.breath_amp *= k;
        p.head_speed *= k;
        shifted.push_back(p);
    }
    Scenario s = paired_stories(1.0);
    Cohort a = make_cohort(base, s), b = make_cohort(shifted, s);
    for (const auto &def : paired_constructs()) {
        INFO(def.name);
        CHECK(std::abs(loso_accuracy(a, def) - loso_accuracy(b, def)) <= 0.03);
    }
}
