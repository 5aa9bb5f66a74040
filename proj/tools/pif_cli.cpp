// pif: command-line front end over the C interface.
//
// Exit codes: 0 success, 1 validation failure (bad story, bad input data,
// bad arguments), 2 runtime error.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "pif/pif.h"

using nlohmann::json;

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

bool g_json = false;

struct Failure {
    pif_status status;
    std::string message;
};

int exit_code(pif_status s)
{
    switch (s) {
    case PIF_OK: return 0;
    case PIF_ERR_VALIDATION:
    case PIF_ERR_INVALID_ARGUMENT:
    case PIF_ERR_CORRUPT: return 1;
    default: return 2;
    }
}

void check(pif_status s)
{
    if (s != PIF_OK)
        throw Failure{s, pif_last_error()};
}

// Owns a string returned by the library.
struct Str {
    char *p = nullptr;
    ~Str() { pif_free(p); }
    char **out() { return &p; }
    std::string str() const { return p ? p : ""; }
};

template <class T, void (*Free)(T *)> struct Handle {
    T *p = nullptr;
    ~Handle() { Free(p); }
    T **out() { return &p; }
    T *get() const { return p; }
};

using Story = Handle<pif_story, pif_story_free>;
using Play = Handle<pif_play, pif_play_free>;
using Classifier = Handle<pif_classifier, pif_classifier_free>;
using Recorder = Handle<pif_recorder, pif_recorder_free>;
using Service = Handle<pif_service, pif_service_free>;

std::string read_file(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Failure{PIF_ERR_IO, "cannot open '" + path + "'"};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_output(const std::string &path, const std::string &content)
{
    if (path.empty() || path == "-") {
        std::cout << content << std::flush;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!(out << content))
        throw Failure{PIF_ERR_IO, "cannot write '" + path + "'"};
}

std::pair<std::string, std::uint16_t> host_port(const std::string &s)
{
    auto colon = s.rfind(':');
    if (colon == std::string::npos)
        throw Failure{PIF_ERR_INVALID_ARGUMENT, "expected host:port, got '" + s + "'"};
    int port = 0;
    try {
        port = std::stoi(s.substr(colon + 1));
    } catch (const std::exception &) {
        port = -1;
    }
    if (port < 0 || port > 65535)
        throw Failure{PIF_ERR_INVALID_ARGUMENT, "bad port in '" + s + "'"};
    return {s.substr(0, colon), static_cast<std::uint16_t>(port)};
}

void wait_until(const std::function<bool()> &done, double max_s)
{
    auto start = std::chrono::steady_clock::now();
    while (!g_interrupted && !done()) {
        if (max_s > 0 && std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= max_s)
            return;
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
}

// lint -------------------------------------------------------------------------

int cmd_lint(const std::vector<std::string> &files, bool allow_warnings)
{
    int rc = 0;
    json all = json::array();
    for (const auto &f : files) {
        Str report;
        pif_status st = pif_story_load(f.c_str(), nullptr, report.out());
        if (st != PIF_OK && st != PIF_ERR_VALIDATION)
            throw Failure{st, pif_last_error()};
        json diags = report.p ? json::parse(report.str()) : json::array();
        bool failed = st != PIF_OK;
        for (const auto &d : diags) {
            if (d["severity"] == "warning" && !allow_warnings)
                failed = true;
            if (!g_json)
                std::cerr << d["text"].get<std::string>() << "\n";
        }
        if (failed)
            rc = 1;
        if (g_json)
            all.push_back({{"file", f}, {"ok", !failed}, {"diagnostics", diags}});
        else if (!failed)
            std::cout << f << ": ok\n";
    }
    if (g_json)
        std::cout << all.dump() << "\n";
    return rc;
}

// play --------------------------------------------------------------------------

void print_page(const json &page)
{
    if (page["type"] == "end") {
        std::cout << "THE END\n";
        return;
    }
    std::cout << "[" << page["knot"].get<std::string>() << " p" << page["page_index"].get<int>() << "]\n"
              << page["text"].get<std::string>() << "\n";
    int i = 1;
    for (const auto &c : page["choices"])
        std::cout << "  " << i++ << ") " << c.get<std::string>() << "\n";
    if (!page["displayable_state"].empty())
        std::cout << "  state " << page["displayable_state"].dump() << "\n";
}

int cmd_play(const std::string &path, const std::string &policy, bool allow_covert,
             const std::vector<std::string> &state)
{
    Story story;
    check(pif_story_load(path.c_str(), story.out(), nullptr));
    double t = 0.0;
    auto parse_kv = [](const std::string &kv) {
        auto eq = kv.find('=');
        double v = 0;
        try {
            if (eq == std::string::npos)
                throw std::invalid_argument(kv);
            v = std::stod(kv.substr(eq + 1));
        } catch (const std::exception &) {
            throw Failure{PIF_ERR_INVALID_ARGUMENT, "expected key=value, got '" + kv + "'"};
        }
        return std::make_pair(kv.substr(0, eq), v);
    };
    json initial = json::object();
    for (const auto &kv : state) {
        auto [k, v] = parse_kv(kv);
        initial[k] = v;
    }
    Play play;
    check(pif_play_start(story.get(), policy.c_str(), allow_covert, initial.dump().c_str(), play.out()));
    auto apply_state = [&](const std::string &kv) {
        auto [k, v] = parse_kv(kv);
        check(pif_play_state(play.get(), t, json{{k, v}}.dump().c_str()));
    };

    auto show = [&] {
        Str msg;
        check(pif_play_page(play.get(), msg.out()));
        json page = json::parse(msg.str());
        if (g_json)
            std::cout << page.dump() << "\n";
        else
            print_page(page);
        return page;
    };
    json page = show();
    if (!g_json)
        std::cout << "> " << std::flush;
    // Commands: empty or "n" advances, a number picks a displayed choice,
    // "set key=value" feeds a state value, "q" quits.
    std::string line;
    while (!pif_play_finished(play.get()) && std::getline(std::cin, line)) {
        t += 1.0;
        pif_status st = PIF_OK;
        if (line == "q")
            break;
        if (line.rfind("set ", 0) == 0) {
            apply_state(line.substr(4));
        } else if (line.empty() || line == "n") {
            st = pif_play_advance(play.get());
        } else {
            std::size_t pos = 0;
            long n = -1;
            try {
                n = std::stol(line, &pos);
            } catch (const std::exception &) {
            }
            if (n < 1 || pos != line.size()) {
                std::cerr << "unknown command '" << line << "'\n";
                continue;
            }
            st = pif_play_choose(play.get(), static_cast<std::size_t>(n - 1));
        }
        if (st == PIF_ERR_STATE)
            std::cerr << "rejected: " << pif_last_error() << "\n";
        else
            check(st);
        if (st == PIF_OK)
            page = show();
        if (!g_json && !pif_play_finished(play.get()))
            std::cout << "> " << std::flush;
    }
    if (g_json) {
        Str events, vars;
        check(pif_play_events(play.get(), events.out()));
        check(pif_play_variables(play.get(), vars.out()));
        std::cout << json{{"type", "summary"},
                          {"finished", pif_play_finished(play.get()) != 0},
                          {"events", json::parse(events.str())},
                          {"variables", json::parse(vars.str())}}
                         .dump()
                  << "\n";
    }
    return 0;
}

// simulate ------------------------------------------------------------------------

int cmd_simulate(const std::string &out, const std::string &scenario_path, double separability,
                 const std::string &subject, std::uint64_t seed, int cohort, bool print_scenario)
{
    std::string scenario;
    if (!scenario_path.empty()) {
        scenario = read_file(scenario_path);
    } else {
        Str s;
        check(pif_scenario_default(separability, s.out()));
        scenario = s.str();
    }
    if (print_scenario) {
        write_output(out, scenario + "\n");
        return 0;
    }
    if (cohort > 0) {
        Str csv;
        check(pif_cohort(scenario.c_str(), cohort, seed, csv.out()));
        write_output(out, csv.str());
    } else {
        if (out.empty() || out == "-")
            throw Failure{PIF_ERR_INVALID_ARGUMENT, "simulate needs --out for a recording"};
        check(pif_simulate(scenario.c_str(), subject.c_str(), seed, out.c_str()));
    }
    if (g_json)
        std::cerr << json{{"ok", true}, {"out", out}}.dump() << "\n";
    return 0;
}

// features / train ----------------------------------------------------------------

int cmd_features(const std::vector<std::string> &recs, const std::string &out)
{
    std::vector<const char *> paths;
    for (const auto &r : recs)
        paths.push_back(r.c_str());
    Str csv;
    check(pif_features(paths.data(), paths.size(), csv.out()));
    write_output(out, csv.str());
    return 0;
}

int cmd_train(const std::string &features, const std::string &construct, const std::string &class_a,
              const std::string &class_b, const std::string &model_out, const std::string &loso_out,
              const std::string &weights_out)
{
    std::string csv = read_file(features);
    Str model, report, loso, weights;
    check(pif_train(csv.c_str(), construct.c_str(), class_a.empty() ? nullptr : class_a.c_str(),
                    class_b.empty() ? nullptr : class_b.c_str(), model.out(), report.out(), loso.out(),
                    weights.out()));
    write_output(model_out, model.str());
    if (!loso_out.empty())
        write_output(loso_out, loso.str());
    if (!weights_out.empty())
        write_output(weights_out, weights.str());
    json r = json::parse(report.str());
    if (g_json) {
        std::cout << r.dump() << "\n";
        return 0;
    }
    std::printf("construct %s: %s vs %s, %zu observations\n", construct.c_str(),
                r["class_a"].get<std::string>().c_str(), r["class_b"].get<std::string>().c_str(),
                r["n_observations"].get<std::size_t>());
    std::printf("LOSO accuracy %.3f\n\n%-12s %3s %3s\n", r["accuracy"].get<double>(), "subject", "n", "ok");
    for (const auto &s : r["per_subject"])
        std::printf("%-12s %3zu %3zu\n", s["subject"].get<std::string>().c_str(), s["n"].get<std::size_t>(),
                    s["correct"].get<std::size_t>());
    std::vector<std::pair<std::string, double>> w;
    for (auto &[k, v] : r["weights"].items())
        w.emplace_back(k, v.get<double>());
    std::stable_sort(w.begin(), w.end(),
                     [](const auto &a, const auto &b) { return std::abs(a.second) > std::abs(b.second); });
    std::printf("\n%-24s %7s\n", "feature", "weight");
    for (const auto &[k, v] : w)
        std::printf("%-24s %+7.3f\n", k.c_str(), v);
    for (const auto &warn : r["warnings"])
        std::fprintf(stderr, "warning: %s\n", warn.get<std::string>().c_str());
    return 0;
}

// classify ------------------------------------------------------------------------

void print_labels(const std::string &jsonl)
{
    std::istringstream in(jsonl);
    for (std::string line; std::getline(in, line);) {
        if (g_json) {
            std::cout << line << "\n";
            continue;
        }
        json j = json::parse(line);
        std::printf("%-12s %10.3f %10.3f %-12s %.3f%s\n", j["story"].get<std::string>().c_str(), j["t0"].get<double>(),
                    j["t1"].get<double>(), j["label"].get<std::string>().c_str(), j["posterior_a"].get<double>(),
                    j.contains("truth") ? ("  truth " + j["truth"].get<std::string>()).c_str() : "");
    }
    std::cout << std::flush;
}

int cmd_classify(const std::string &model_path, const std::string &input)
{
    std::string model = read_file(model_path);
    Classifier c;
    check(pif_classifier_open(model.c_str(), c.out()));
    std::ifstream file;
    std::istream *in = &std::cin;
    if (!input.empty() && input != "-") {
        file.open(input, std::ios::binary);
        if (!file)
            throw Failure{PIF_ERR_IO, "cannot open '" + input + "'"};
        in = &file;
    }
    // Line at a time so that labels appear as soon as a window closes.
    for (std::string line; std::getline(*in, line);) {
        line += '\n';
        Str labels;
        check(pif_classifier_feed(c.get(), line.data(), line.size(), labels.out()));
        print_labels(labels.str());
    }
    Str labels;
    check(pif_classifier_finish(c.get(), labels.out()));
    print_labels(labels.str());
    return 0;
}

// replay / record -------------------------------------------------------------------

int cmd_replay(const std::string &path, const std::string &speed, const std::string &serve, double wait)
{
    if (!serve.empty()) {
        auto [host, port] = host_port(serve);
        check(pif_replay_serve(path.c_str(), speed.c_str(), host.c_str(), port, wait));
        return 0;
    }
    auto sink = [](const char *line, size_t len, void *) {
        std::fwrite(line, 1, len, stdout);
        std::fputc('\n', stdout);
        std::fflush(stdout);
    };
    check(pif_replay(path.c_str(), speed.c_str(), sink, nullptr));
    return 0;
}

int cmd_record(const std::string &from, const std::string &streams, const std::string &out, double duration)
{
    auto [host, port] = host_port(from);
    Recorder rec;
    check(pif_recorder_open(host.c_str(), port, streams.c_str(), out.c_str(), rec.out()));
    wait_until([] { return false; }, duration);
    Str summary;
    check(pif_recorder_stop(rec.get(), summary.out()));
    json s = json::parse(summary.str());
    if (g_json)
        std::cout << s.dump() << "\n";
    else
        for (const auto &st : s["streams"])
            std::cout << st["id"].get<std::string>() << ": " << st["samples"] << " samples, " << st["overflow"]
                      << " dropped\n";
    return 0;
}

// serve ---------------------------------------------------------------------------

int cmd_serve(const std::string &config_path, const std::string &story, const std::string &input,
              const std::string &policy, int port, bool exit_on_end, double duration)
{
    json cfg = json::object();
    std::string base = std::filesystem::current_path().string();
    if (!config_path.empty()) {
        cfg = json::parse(read_file(config_path));
        base = std::filesystem::absolute(config_path).parent_path().string();
    }
    if (!story.empty())
        cfg["story"] = std::filesystem::absolute(story).string();
    if (!input.empty()) {
        auto colon = input.find(':');
        std::string kind = input.substr(0, colon), arg = colon == std::string::npos ? "" : input.substr(colon + 1);
        if (kind != "simulator" && kind != "replay" && kind != "live")
            throw Failure{PIF_ERR_INVALID_ARGUMENT, "input must be simulator[:scenario], replay:FILE or live:HOST:PORT"};
        if (kind != "live" && !arg.empty())
            arg = std::filesystem::absolute(arg).string();
        cfg["input"] = json{{kind, arg}};
    }
    if (!policy.empty())
        cfg["policy"] = policy;
    if (port >= 0) {
        cfg["ui"] = cfg.value("ui", json::object());
        cfg["ui"]["port"] = port;
    }
    Service svc;
    check(pif_service_open(cfg.dump().c_str(), base.c_str(), svc.out()));
    std::uint16_t p = pif_service_port(svc.get());
    if (g_json)
        std::cout << json{{"type", "listening"}, {"port", p}}.dump() << std::endl;
    else
        std::cout << "serving reader on port " << p << std::endl;
    wait_until([&] { return exit_on_end && pif_service_finished(svc.get()); }, duration);
    check(pif_service_stop(svc.get()));
    return 0;
}

} // namespace

int main(int argc, char **argv)
{
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);

    CLI::App app{"Physiological interactive fiction toolkit"};
    app.require_subcommand(1);
    std::string format = "text";
    app.add_option("--format", format, "Output format")->check(CLI::IsMember({"text", "json"}));
    app.set_version_flag("--version", std::string(pif_version()));

    std::vector<std::string> files;
    bool allow_warnings = false;
    auto *lint = app.add_subcommand("lint", "Parse and lint story files");
    lint->add_option("files", files, "Story files")->required();
    lint->add_flag("--allow-warnings", allow_warnings, "Only errors fail");

    std::string story, policy = "neuroadaptive";
    bool allow_covert = false;
    std::vector<std::string> state;
    auto *play = app.add_subcommand("play", "Play a story in the terminal (commands on stdin)");
    play->add_option("story", story, "Story file")->required();
    play->add_option("--policy", policy, "Director policy");
    play->add_flag("--allow-covert", allow_covert, "Permit the covert policy");
    play->add_option("--state", state, "Initial state values, key=value");

    std::string out, scenario, subject = "S01";
    double separability = 1.0;
    std::uint64_t seed = 1;
    int cohort = 0;
    bool print_scenario = false;
    auto *simulate = app.add_subcommand("simulate", "Generate synthetic recordings or a cohort feature table");
    simulate->add_option("--out,-o", out, "Recording (.pifrec) or, with --cohort, feature CSV");
    simulate->add_option("--scenario", scenario, "Scenario JSON file");
    simulate->add_option("--separability", separability, "Paired-story separability in [0,1]");
    simulate->add_option("--subject", subject, "Subject id");
    simulate->add_option("--seed", seed, "Random seed");
    simulate->add_option("--cohort", cohort, "Simulate N subjects and write their features");
    simulate->add_flag("--print-scenario", print_scenario, "Write the scenario JSON and exit");

    std::vector<std::string> recordings;
    auto *features = app.add_subcommand("features", "Extract story-window features from recordings");
    features->add_option("recordings", recordings, "Recording files")->required();
    features->add_option("--out,-o", out, "CSV output (default stdout)");

    std::string feature_csv, construct, class_a, class_b, model = "model.json", loso_out, weights_out;
    auto *train = app.add_subcommand("train", "Evaluate leave-one-subject-out and fit a model");
    train->add_option("--features", feature_csv, "Feature CSV")->required();
    train->add_option("--construct", construct, "Construct name")->required();
    train->add_option("--class-a", class_a, "Label of class A");
    train->add_option("--class-b", class_b, "Label of class B");
    train->add_option("--model,-o", model, "Model output");
    train->add_option("--loso", loso_out, "Per-subject LOSO CSV output");
    train->add_option("--weights", weights_out, "Feature weight CSV output");

    std::string input;
    auto *classify = app.add_subcommand("classify", "Label story windows of a streamed recording");
    classify->add_option("--model,-m", model, "Model file")->required();
    classify->add_option("input", input, "Recording (default stdin)");

    std::string speed = "max", serve_addr;
    double wait = 0.0;
    auto *replay = app.add_subcommand("replay", "Replay a recording through the transport layer");
    replay->add_option("recording", input, "Recording file")->required();
    replay->add_option("--speed", speed, "realtime or max")->check(CLI::IsMember({"realtime", "max"}));
    replay->add_option("--serve", serve_addr, "Publish on a hub at host:port instead of writing stdout");
    replay->add_option("--wait", wait, "Seconds to wait for subscribers before replaying (with --serve)");

    std::string from, streams;
    double duration = 0.0;
    auto *record = app.add_subcommand("record", "Record streams from a hub");
    record->add_option("--from", from, "Hub address host:port")->required();
    record->add_option("--streams", streams, "Comma-separated stream ids (default all)");
    record->add_option("--out,-o", out, "Recording output")->required();
    record->add_option("--duration", duration, "Seconds to record (default until interrupted)");

    std::string config;
    int port = -1;
    bool exit_on_end = false;
    auto *serve = app.add_subcommand("serve", "Run a session for one reader over WebSocket");
    serve->add_option("--config,-c", config, "Session config (JSON)");
    serve->add_option("--story", story, "Story file");
    serve->add_option("--input", input, "simulator[:SCENARIO], replay:FILE or live:HOST:PORT");
    serve->add_option("--policy", policy, "Director policy");
    serve->add_option("--port", port, "Reader port (0 = any free port)");
    serve->add_flag("--exit-on-end", exit_on_end, "Stop when the story ends");
    serve->add_option("--duration", duration, "Stop after this many seconds");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    g_json = format == "json";

    try {
        if (*lint)
            return cmd_lint(files, allow_warnings);
        if (*play)
            return cmd_play(story, policy, allow_covert, state);
        if (*simulate)
            return cmd_simulate(out, scenario, separability, subject, seed, cohort, print_scenario);
        if (*features)
            return cmd_features(recordings, out);
        if (*train)
            return cmd_train(feature_csv, construct, class_a, class_b, model, loso_out, weights_out);
        if (*classify)
            return cmd_classify(model, input);
        if (*replay)
            return cmd_replay(input, speed, serve_addr, wait);
        if (*record)
            return cmd_record(from, streams, out, duration);
        if (*serve)
            return cmd_serve(config, story, input, serve->count("--policy") ? policy : "", port, exit_on_end,
                             duration);
    } catch (const Failure &f) {
        if (g_json)
            std::cerr << json{{"ok", false}, {"status", pif_status_name(f.status)}, {"error", f.message}}.dump()
                      << "\n";
        else
            std::cerr << "pif: " << f.message << "\n";
        return exit_code(f.status);
    } catch (const json::exception &e) {
        std::cerr << "pif: malformed JSON: " << e.what() << "\n";
        return 1;
    } catch (const std::exception &e) {
        std::cerr << "pif: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
