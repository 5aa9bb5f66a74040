#include "pif/pif.h"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "classify/classify.hpp"
#include "common/error.hpp"
#include "features/features.hpp"
#include "json.hpp"
#include "pipeline/stream.hpp"
#include "pipeline/windows.hpp"
#include "session/service.hpp"
#include "session/session.hpp"
#include "sim/sim.hpp"
#include "story/graph.hpp"
#include "story/runtime.hpp"
#include "transport/net.hpp"
#include "transport/recording.hpp"

using nlohmann::json;

struct pif_story {
    std::shared_ptr<const pif::story::StoryGraph> graph;
};

struct pif_play {
    std::unique_ptr<pif::session::SessionCore> core;
    double t = 0.0;
};

struct pif_classifier {
    pif::classify::Model model;
    pif::pipeline::WindowStream windows;
};

struct pif_recorder {
    std::unique_ptr<pif::transport::Recorder> recorder;
};

struct pif_service {
    std::unique_ptr<pif::session::Session> session;
};

namespace {

thread_local std::string g_error;

pif_status status_of(pif::Error::Category c)
{
    using C = pif::Error::Category;
    switch (c) {
    case C::InvalidArgument: return PIF_ERR_INVALID_ARGUMENT;
    case C::Validation: return PIF_ERR_VALIDATION;
    case C::Io: return PIF_ERR_IO;
    case C::Corrupt: return PIF_ERR_CORRUPT;
    case C::Timeout: return PIF_ERR_TIMEOUT;
    case C::State: return PIF_ERR_STATE;
    case C::Network: return PIF_ERR_NETWORK;
    case C::Runtime: return PIF_ERR_RUNTIME;
    }
    return PIF_ERR_RUNTIME;
}

// Runs `f`, translating exceptions into status codes and the thread's error
// message.
template <class F> pif_status guard(F &&f)
{
    g_error.clear();
    try {
        f();
        return PIF_OK;
    } catch (const pif::Error &e) {
        g_error = e.what();
        return status_of(e.category());
    } catch (const json::exception &e) {
        g_error = std::string("malformed JSON: ") + e.what();
        return PIF_ERR_VALIDATION;
    } catch (const std::bad_alloc &) {
        g_error = "out of memory";
        return PIF_ERR_RUNTIME;
    } catch (const std::exception &e) {
        g_error = e.what();
        return PIF_ERR_RUNTIME;
    }
}

char *dup(const std::string &s)
{
    char *p = static_cast<char *>(std::malloc(s.size() + 1));
    if (!p)
        throw std::bad_alloc();
    std::memcpy(p, s.data(), s.size() + 1);
    return p;
}

void put(char **out, const std::string &s)
{
    if (out)
        *out = dup(s);
}

void need(const void *p, const char *what)
{
    if (!p)
        throw pif::invalid_argument(std::string(what) + " must not be null");
}

std::string read_file(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw pif::io_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

pif_status parse_story(const std::string &text, const std::string &origin, pif_story **out, char **report)
{
    using namespace pif::story;
    std::vector<Diagnostic> diags;
    std::optional<StoryGraph> graph;
    pif_status st = guard([&] {
        ParseResult r = parse({text, origin});
        diags = r.errors;
        if (r.ok()) {
            auto more = lint(*r.graph);
            diags.insert(diags.end(), more.begin(), more.end());
            graph = std::move(r.graph);
        }
        json arr = json::array();
        for (const Diagnostic &d : diags)
            arr.push_back({{"severity", std::string(severity_name(d.severity))},
                           {"line", d.pos.line},
                           {"column", d.pos.col},
                           {"message", d.message},
                           {"text", format_diagnostic(d, origin)}});
        put(report, arr.dump());
        if (!graph) {
            std::string first = diags.empty() ? "parse failed" : format_diagnostic(diags.front(), origin);
            throw pif::validation_error(first);
        }
        if (out)
            *out = new pif_story{std::make_shared<const StoryGraph>(std::move(*graph))};
    });
    return st;
}

pif::transport::ReplaySpeed speed_of(const char *speed)
{
    std::string s = speed ? speed : "max";
    if (s == "max")
        return pif::transport::ReplaySpeed::Max;
    if (s == "realtime")
        return pif::transport::ReplaySpeed::Realtime;
    throw pif::invalid_argument("speed must be 'realtime' or 'max'");
}

pif::sim::Scenario scenario_of(const char *scenario_json)
{
    if (!scenario_json)
        return pif::sim::paired_stories(1.0);
    return pif::sim::scenario_from_json(scenario_json);
}

std::string labels_jsonl(const pif::classify::Model &m, const std::vector<pif::pipeline::ClosedWindow> &ws)
{
    std::string out;
    for (const auto &w : ws) {
        pif::features::FeatureVector fv = pif::features::extract(w.labeled.window);
        if (fv.names != m.registry)
            throw pif::validation_error("model feature registry does not match the extractor");
        auto p = pif::classify::predict(m, fv.values, {}, pif::classify::RankMode::Quantile);
        json j{{"story", w.labeled.story},
               {"t0", w.labeled.window.t0},
               {"t1", w.labeled.window.t1},
               {"label", p.label == pif::classify::Class::A ? m.class_a : m.class_b},
               {"posterior_a", p.posterior_a}};
        if (!w.subject.empty())
            j["subject"] = w.subject;
        if (w.labeled.label && (*w.labeled.label == m.class_a || *w.labeled.label == m.class_b))
            j["truth"] = *w.labeled.label;
        out += j.dump() + "\n";
    }
    return out;
}

} // namespace

extern "C" {

const char *pif_version(void) { return "0.1.0"; }

const char *pif_last_error(void) { return g_error.c_str(); }

const char *pif_status_name(pif_status s)
{
    switch (s) {
    case PIF_OK: return "ok";
    case PIF_ERR_INVALID_ARGUMENT: return "invalid argument";
    case PIF_ERR_VALIDATION: return "validation failed";
    case PIF_ERR_IO: return "i/o error";
    case PIF_ERR_CORRUPT: return "corrupt input";
    case PIF_ERR_TIMEOUT: return "timeout";
    case PIF_ERR_STATE: return "illegal state";
    case PIF_ERR_NETWORK: return "network error";
    case PIF_ERR_RUNTIME: return "runtime error";
    }
    return "unknown";
}

void pif_free(void *p) { std::free(p); }

// Stories ---------------------------------------------------------------------

pif_status pif_story_parse(const char *text, const char *origin, pif_story **out, char **report_json)
{
    if (!text) {
        g_error = "text must not be null";
        return PIF_ERR_INVALID_ARGUMENT;
    }
    return parse_story(text, origin ? origin : "<inline>", out, report_json);
}

pif_status pif_story_load(const char *path, pif_story **out, char **report_json)
{
    std::string text;
    pif_status st = guard([&] {
        need(path, "path");
        text = read_file(path);
    });
    if (st != PIF_OK)
        return st;
    return parse_story(text, path, out, report_json);
}

pif_status pif_story_print(const pif_story *s, char **text)
{
    return guard([&] {
        need(s, "story");
        need(text, "text");
        *text = dup(pif::story::print(*s->graph));
    });
}

void pif_story_free(pif_story *s) { delete s; }

// Headless play -----------------------------------------------------------------

namespace {

pif::director::StateUpdate parse_state(double t, const char *values_json)
{
    json j = json::parse(values_json);
    if (!j.is_object())
        throw pif::validation_error("state values must be an object");
    pif::director::StateUpdate u{t, {}, "play"};
    for (auto &[k, v] : j.items()) {
        if (!v.is_number() || !std::isfinite(v.get<double>()))
            throw pif::validation_error("state value '" + k + "' must be a finite number");
        u.values.emplace_back(k, v.get<double>());
    }
    return u;
}

} // namespace

pif_status pif_play_start(const pif_story *s, const char *policy, int allow_covert, const char *initial_state_json,
                          pif_play **out)
{
    return guard([&] {
        need(s, "story");
        need(out, "out");
        pif::session::CoreConfig cfg;
        cfg.debounce = 0.0;
        cfg.state_interval = 0.0;
        cfg.director.policy = pif::director::parse_policy(policy ? policy : "neuroadaptive");
        cfg.director.allow_covert = allow_covert != 0;
        if (cfg.director.policy == pif::director::Policy::Covert && !allow_covert)
            throw pif::validation_error("covert policy requires explicit permission");
        auto p = std::make_unique<pif_play>();
        p->core = std::make_unique<pif::session::SessionCore>(s->graph, cfg);
        if (initial_state_json)
            p->core->apply_state(parse_state(0.0, initial_state_json));
        p->core->begin(0.0);
        *out = p.release();
    });
}

pif_status pif_play_page(pif_play *p, char **message_json)
{
    return guard([&] {
        need(p, "play");
        need(message_json, "message_json");
        *message_json = dup(p->core->page_message());
    });
}

namespace {

pif_status play_action(pif_play *p, const pif::session::ReaderAction &a)
{
    return guard([&] {
        need(p, "play");
        p->t += 1.0;
        if (!p->core->apply_action(a, p->t)) {
            auto log = p->core->reader_log();
            throw pif::state_error(log.empty() ? "rejected" : log.back().reason);
        }
    });
}

} // namespace

pif_status pif_play_advance(pif_play *p) { return play_action(p, pif::session::ReaderAction::advance()); }

pif_status pif_play_choose(pif_play *p, size_t index) { return play_action(p, pif::session::ReaderAction::choose(index)); }

pif_status pif_play_state(pif_play *p, double t, const char *values_json)
{
    return guard([&] {
        need(p, "play");
        need(values_json, "values_json");
        p->core->apply_state(parse_state(t, values_json));
    });
}

int pif_play_finished(const pif_play *p) { return p && p->core->finished() ? 1 : 0; }

pif_status pif_play_events(pif_play *p, char **events_json)
{
    return guard([&] {
        need(p, "play");
        need(events_json, "events_json");
        json arr = json::array();
        for (const auto &e : p->core->events())
            arr.push_back(pif::story::describe(e));
        *events_json = dup(arr.dump());
    });
}

pif_status pif_play_variables(pif_play *p, char **variables_json)
{
    return guard([&] {
        need(p, "play");
        need(variables_json, "variables_json");
        json j = json::object();
        for (const auto &[k, v] : p->core->state().variables)
            std::visit([&, &k = k](auto x) { j[k] = x; }, v);
        *variables_json = dup(j.dump());
    });
}

void pif_play_free(pif_play *p) { delete p; }

// Simulation ------------------------------------------------------------------------

pif_status pif_scenario_default(double separability, char **scenario_json)
{
    return guard([&] {
        need(scenario_json, "scenario_json");
        *scenario_json = dup(pif::sim::scenario_to_json(pif::sim::paired_stories(separability)));
    });
}

pif_status pif_simulate(const char *scenario_json, const char *subject, uint64_t seed, const char *out_path)
{
    return guard([&] {
        need(out_path, "out_path");
        pif::sim::Scenario sc = scenario_of(scenario_json);
        sc.validate();
        auto profile = pif::sim::random_profile(subject ? subject : "S01", seed);
        pif::transport::save_recording(out_path, pif::sim::generate(profile, sc));
    });
}

pif_status pif_cohort(const char *scenario_json, int n_subjects, uint64_t seed, char **feature_csv)
{
    return guard([&] {
        need(feature_csv, "feature_csv");
        if (n_subjects < 1)
            throw pif::invalid_argument("cohort needs at least one subject");
        pif::sim::Scenario sc = scenario_of(scenario_json);
        sc.validate();
        auto cohort = pif::sim::make_cohort(n_subjects, sc, seed);
        std::ostringstream os;
        pif::features::write_feature_csv(os, cohort.rows);
        *feature_csv = dup(os.str());
    });
}

// Features and models -------------------------------------------------------------

pif_status pif_features(const char *const *recording_paths, size_t n, char **feature_csv)
{
    return guard([&] {
        need(feature_csv, "feature_csv");
        if (n > 0)
            need(recording_paths, "recording_paths");
        std::vector<pif::features::FeatureVector> rows;
        for (size_t i = 0; i < n; ++i) {
            need(recording_paths[i], "recording path");
            auto part = pif::pipeline::extract_recording(pif::transport::read_recording(recording_paths[i]));
            rows.insert(rows.end(), part.begin(), part.end());
        }
        std::ostringstream os;
        pif::features::write_feature_csv(os, rows);
        *feature_csv = dup(os.str());
    });
}

pif_status pif_train(const char *feature_csv, const char *construct, const char *class_a, const char *class_b,
                     char **model_json, char **report_json, char **loso_csv, char **weights_csv)
{
    return guard([&] {
        need(feature_csv, "feature_csv");
        need(construct, "construct");
        std::string a = class_a ? class_a : "", b = class_b ? class_b : "";
        if (a.empty() || b.empty()) {
            bool found = false;
            for (const auto &d : pif::sim::paired_constructs())
                if (d.name == construct) {
                    a = a.empty() ? d.class_a : a;
                    b = b.empty() ? d.class_b : b;
                    found = true;
                }
            if (!found)
                throw pif::invalid_argument(std::string("no default classes for construct '") + construct +
                                            "'; name both classes");
        }
        std::istringstream in(feature_csv);
        auto rows = pif::features::read_feature_csv(in);
        auto data = pif::classify::dataset_from_features(rows, a, b, construct);
        auto loso = pif::classify::loso_cv(data);
        auto model = pif::classify::fit(data);

        json report{{"construct", construct},
                    {"class_a", a},
                    {"class_b", b},
                    {"accuracy", loso.accuracy},
                    {"n_observations", data.observations.size()},
                    {"warnings", model.warnings}};
        json subjects = json::array();
        for (const auto &s : loso.per_subject)
            subjects.push_back({{"subject", s.subject}, {"n", s.n}, {"correct", s.correct}});
        report["per_subject"] = subjects;
        json weights = json::object();
        for (std::size_t i = 0; i < data.registry.size(); ++i)
            weights[data.registry[i]] = loso.weights[i];
        report["weights"] = weights;

        put(model_json, pif::classify::model_to_json(model));
        put(report_json, report.dump());
        if (loso_csv) {
            std::ostringstream os;
            pif::classify::write_loso_csv(os, loso);
            *loso_csv = dup(os.str());
        }
        if (weights_csv) {
            std::ostringstream os;
            pif::classify::write_weights_csv(os, data.registry, loso.weights, construct);
            *weights_csv = dup(os.str());
        }
    });
}

pif_status pif_classifier_open(const char *model_json, pif_classifier **out)
{
    return guard([&] {
        need(model_json, "model_json");
        need(out, "out");
        auto c = std::make_unique<pif_classifier>();
        c->model = pif::classify::model_from_json(model_json);
        std::vector<std::string> names = pif::features::extract(pif::features::PhysioWindow{}).names;
        if (c->model.registry != names)
            throw pif::validation_error("model feature registry does not match the extractor");
        *out = c.release();
    });
}

pif_status pif_classifier_feed(pif_classifier *c, const char *data, size_t len, char **labels)
{
    return guard([&] {
        need(c, "classifier");
        need(labels, "labels_jsonl");
        if (len > 0)
            need(data, "data");
        *labels = dup(labels_jsonl(c->model, c->windows.feed(std::string(data ? data : "", len))));
    });
}

pif_status pif_classifier_finish(pif_classifier *c, char **labels)
{
    return guard([&] {
        need(c, "classifier");
        need(labels, "labels_jsonl");
        *labels = dup(labels_jsonl(c->model, c->windows.finish()));
    });
}

void pif_classifier_free(pif_classifier *c) { delete c; }

// Transport ---------------------------------------------------------------------------

pif_status pif_replay(const char *path, const char *speed, pif_line_fn sink, void *user)
{
    return guard([&] {
        need(path, "path");
        need(reinterpret_cast<const void *>(sink), "sink");
        using namespace pif::transport;
        ReplaySpeed sp = speed_of(speed);
        Recording rec = read_recording(path);
        Registry reg;
        Replayer replayer(rec, reg);

        std::vector<std::size_t> counts(rec.streams.size(), 0);
        for (const auto &s : rec.samples)
            ++counts[s.stream];
        std::vector<Inlet> inlets;
        for (std::size_t i = 0; i < rec.streams.size(); ++i)
            inlets.push_back(reg.open_inlet(rec.streams[i].source_id, counts[i] + 1));

        // Lines go to the sink as they are written.
        struct LineBuf : std::stringbuf {
            pif_line_fn fn;
            void *user;
            int sync() override
            {
                std::string s = str();
                std::size_t start = 0;
                for (std::size_t nl; (nl = s.find('\n', start)) != std::string::npos; start = nl + 1)
                    fn(s.data() + start, nl - start, user);
                str(s.substr(start));
                return 0;
            }
        } buf;
        buf.fn = sink;
        buf.user = user;
        std::ostream os(&buf);

        SessionHeader header = rec.header;
        header.wall_clock_start = wall_clock_now_iso();
        header.meta["replayed_from"] = std::filesystem::path(path).filename().string();
        RecordingWriter writer(os, header, rec.streams);
        os.flush();

        std::thread producer([&] {
            replayer.run(sp);
            replayer.close();
        });
        try {
            for (bool more = true; more;) {
                more = false;
                std::size_t got = 0;
                for (std::size_t i = 0; i < inlets.size(); ++i) {
                    for (const Sample &s : inlets[i].pull(4096))
                        writer.write(i, s), ++got;
                    more = more || !inlets[i].exhausted();
                }
                os.flush();
                if (more && got == 0)
                    std::this_thread::sleep_for(std::chrono::milliseconds(2));
            }
        } catch (...) {
            replayer.cancel();
            producer.join();
            throw;
        }
        producer.join();
        writer.flush();
        os.flush();
    });
}

pif_status pif_replay_serve(const char *path, const char *speed, const char *host, uint16_t port, double wait_s)
{
    return guard([&] {
        need(path, "path");
        using namespace pif::transport;
        ReplaySpeed sp = speed_of(speed);
        Recording rec = read_recording(path);
        Registry reg;
        Hub hub(reg, host ? host : "127.0.0.1", port);
        Replayer replayer(rec, reg);
        if (wait_s > 0)
            std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
        replayer.run(sp);
        // Give subscribers a moment to drain before the streams disappear.
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
        replayer.close();
        hub.stop();
    });
}

pif_status pif_recorder_open(const char *host, uint16_t port, const char *streams, const char *out_path,
                             pif_recorder **out)
{
    return guard([&] {
        need(host, "host");
        need(out_path, "out_path");
        need(out, "out");
        using namespace pif::transport;
        std::vector<std::string> wanted;
        if (streams && *streams) {
            std::stringstream ss(streams);
            for (std::string s; std::getline(ss, s, ',');)
                if (!s.empty())
                    wanted.push_back(s);
        } else {
            for (const StreamInfo &i : remote_list(host, port))
                wanted.push_back(i.source_id);
        }
        if (wanted.empty())
            throw pif::validation_error(std::string("no streams to record at ") + host + ":" + std::to_string(port));
        std::vector<Inlet> inlets;
        for (const auto &w : wanted)
            inlets.push_back(remote_inlet(host, port, w));
        auto r = std::make_unique<pif_recorder>();
        r->recorder = std::make_unique<Recorder>(out_path, std::move(inlets),
                                                 std::map<std::string, std::string>{{"source", std::string(host) + ":" + std::to_string(port)}});
        r->recorder->start();
        *out = r.release();
    });
}

pif_status pif_recorder_stop(pif_recorder *r, char **summary_json)
{
    return guard([&] {
        need(r, "recorder");
        auto sum = r->recorder->stop();
        json streams = json::array();
        for (const auto &s : sum.streams)
            streams.push_back({{"id", s.source_id}, {"samples", s.samples}, {"overflow", s.overflow}});
        put(summary_json, json{{"streams", streams}, {"samples", sum.total_samples()}}.dump());
    });
}

void pif_recorder_free(pif_recorder *r)
{
    if (!r)
        return;
    try {
        r->recorder->stop();
    } catch (...) {
    }
    delete r;
}

// Session service ---------------------------------------------------------------------

pif_status pif_service_open(const char *config_json, const char *base_dir, pif_service **out)
{
    return guard([&] {
        need(config_json, "config_json");
        need(out, "out");
        auto cfg = pif::session::SessionConfig::from_json(config_json, base_dir ? base_dir : "");
        cfg.validate();
        auto s = std::make_unique<pif_service>();
        s->session = std::make_unique<pif::session::Session>(std::move(cfg));
        s->session->start();
        *out = s.release();
    });
}

uint16_t pif_service_port(const pif_service *s) { return s ? s->session->ui_port() : 0; }

int pif_service_finished(const pif_service *s) { return s && s->session->core().finished() ? 1 : 0; }

pif_status pif_service_stop(pif_service *s)
{
    return guard([&] {
        need(s, "service");
        s->session->stop();
    });
}

void pif_service_free(pif_service *s)
{
    if (!s)
        return;
    try {
        s->session->stop();
    } catch (...) {
    }
    delete s;
}

} // extern "C"
