#include "doctest.h"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "common/error.hpp"
#include "json.hpp"
#include "session/service.hpp"
#include "session/session.hpp"
#include "session/ws.hpp"
#include "story_fixtures.hpp"
#include "transport/recording.hpp"

using namespace pif;
using namespace pif::session;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

const char *kSteerStory = R"(== intro ==
##CAVE_START
You enter a cave.
---
It is dark.
##CAVE_STOP
*auto {threshold phys_arousal 0.5} -> flee, linger

== flee ==
You run back into the light.
-> END

== linger ==
You sit down and listen.
-> END
)";

std::shared_ptr<const story::StoryGraph> graph_of(const char *text)
{
    return std::make_shared<const story::StoryGraph>(test::parse_ok(text));
}

struct TempDir {
    fs::path path;
    TempDir()
    {
        static int n = 0;
        path = fs::temp_directory_path() / ("pif_session_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string &name, const std::string &content) const
    {
        std::ofstream(path / name) << content;
        return (path / name).string();
    }
};

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

json next_of_type(WsClient &c, const std::string &type, double timeout = 5.0)
{
    for (;;) {
        json j = json::parse(c.receive(timeout));

        if (j["type"] == type)
            return j;
    }
}

bool wait_for(const std::function<bool()> &pred, double seconds = 5.0)
{
    auto end = std::chrono::steady_clock::now() + std::chrono::duration<double>(seconds);
    while (std::chrono::steady_clock::now() < end) {
        if (pred())
            return true;
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    return pred();
}

} // namespace

TEST_CASE("session: protocol messages")
{
    CHECK(decode_client(R"({"type":"advance"})") == ReaderAction::advance());
    CHECK(decode_client(R"({"type":"choose","index":2})") == ReaderAction::choose(2));
    ReaderAction s = decode_client(R"({"type":"sim","arousal":0.9})");
    CHECK(s.kind == ReaderAction::Kind::Sim);
    REQUIRE(s.values.size() == 1);
    CHECK(s.values[0] == std::make_pair(std::string("arousal"), 0.9));
    for (const char *bad : {"", "[]", "{}", R"({"type":"jump"})", R"({"type":"choose"})",
                            R"({"type":"choose","index":-1})", R"({"type":"choose","index":1.5})",
                            R"({"type":"sim"})", R"({"type":"sim","arousal":"high"})", R"({"type":"advance","x":1})"}) {
        INFO(bad);
        CHECK(category_of([&] { decode_client(bad); }) == Error::Category::Validation);
    }

    PageView p{"intro", 1, "It is dark.", {"a", "b"}, {{"phys_arousal", 0.5}}, false};
    json j = json::parse(encode_page(p));
    CHECK(j["type"] == "page");
    CHECK(j["knot"] == "intro");
    CHECK(j["page_index"] == 1);
    CHECK(j["choices"].size() == 2);
    CHECK(j["displayable_state"]["phys_arousal"] == 0.5);
    json st = json::parse(encode_state({{"phys_valence", 0.7}}));
    CHECK(st["type"] == "state");
    CHECK(st["phys_valence"] == 0.7);

    std::vector<ReaderLogEntry> log{{1.5, ReaderAction::advance(), {{"sim", 3}}, true, ""},
                                    {2.0, ReaderAction::choose(1), {{"sim", 5}}, false, "debounce"},
                                    {2.5, ReaderAction::sim({{"arousal", 1.0}}), {}, true, ""},
                                    {3.0, {ReaderAction::Kind::Stop, 0, {}}, {{"sim", 9}}, true, ""}};
    CHECK(reader_log_from_jsonl(reader_log_to_jsonl(log)) == log);
    CHECK(category_of([] { reader_log_from_jsonl("{\"t\":1}\n"); }) == Error::Category::Validation);
}

TEST_CASE("session: advance debounce")
{
    SessionCore core(graph_of(test::kDungeonStory));
    std::vector<std::string> sent;
    core.set_listener([&](const std::string &m) { sent.push_back(m); });
    core.begin(0.0);
    CHECK(json::parse(sent.back())["knot"] == "entrance");
    CHECK_FALSE(core.apply_action(ReaderAction::advance(), 0.5)); // choice page
    CHECK(json::parse(sent.back())["type"] == "rejected");
    CHECK(core.apply_action(ReaderAction::choose(0), 1.0));
    CHECK(core.page().knot == "dungeon");
    CHECK(core.apply_action(ReaderAction::advance(), 10.0));
    CHECK(core.page().page_index == 1);
    CHECK(core.apply_action(ReaderAction::choose(0), 10.5)); // choices are not debounced
    CHECK(core.page().knot == "forest");
    // 1.5 s after the previous advance: rejected.
    CHECK_FALSE(core.apply_action(ReaderAction::advance(), 11.5));
    json r = json::parse(sent.back());
    CHECK(r["reason"] == "debounce");
    CHECK(core.apply_action(ReaderAction::advance(), 12.0));
    CHECK(core.finished());
    CHECK(json::parse(sent.back())["type"] == "end");
    CHECK_FALSE(core.apply_action(ReaderAction::advance(), 20.0));
    CHECK_FALSE(core.apply_action(ReaderAction::sim({{"arousal", 1}}), 21.0)); // no simulator

    auto log = core.reader_log();
    REQUIRE(log.size() == 8);
    CHECK(std::count_if(log.begin(), log.end(), [](const auto &e) { return e.accepted; }) == 4);
}

TEST_CASE("session: double advance within the debounce turns one page")
{
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        SessionCore core(graph_of(kSteerStory));
        core.begin(0.0);
        double t = 5.0, gap = std::uniform_real_distribution<double>(0.0, 1.999)(rng);
        core.apply_action(ReaderAction::advance(), t);
        core.apply_action(ReaderAction::advance(), t + gap);
        CHECK(core.page().page_index == 1);
    }
}

TEST_CASE("session: state updates reach the story and the reader")
{
    CoreConfig cfg;
    cfg.director.policy = director::Policy::Biofeedback;
    cfg.state_interval = 0.0;
    SessionCore core(graph_of(kSteerStory), cfg);
    std::vector<std::string> sent;
    std::mutex mu;
    core.set_listener([&](const std::string &m) {
        std::lock_guard lock(mu);
        sent.push_back(m);
    });
    core.start();
    core.post_state({1.0, {{"arousal", 0.8}}, "sim"});
    core.post_state({1.1, {{"arousal", 0.9}}, "sim"});
    core.sync();
    CHECK(core.state().variables.at("phys_arousal") == story::Value(0.9));
    CHECK(core.applied().at("sim") == 2);
    CHECK(wait_for([&] {
        std::lock_guard lock(mu);
        return std::any_of(sent.begin(), sent.end(), [](const std::string &m) {
            json j = json::parse(m);
            return j["type"] == "state" && j.contains("phys_arousal");
        });
    }));
    core.stop();

    // Neuroadaptive readers never see state values.
    CoreConfig hidden;
    hidden.state_interval = 0.0;
    SessionCore quiet(graph_of(kSteerStory), hidden);
    std::vector<std::string> quiet_sent;
    quiet.set_listener([&](const std::string &m) { quiet_sent.push_back(m); });
    quiet.begin(0.0);
    quiet.apply_state({1.0, {{"arousal", 0.8}}, "sim"});
    CHECK(json::parse(quiet.page_message())["displayable_state"].empty());
    for (const auto &m : quiet_sent)
        CHECK(json::parse(m)["type"] != "state");
}

TEST_CASE("session: arousal steers the automatic branch")
{
    for (double arousal : {0.1, 0.9}) {
        SessionCore core(graph_of(kSteerStory));
        core.begin(0.0);
        core.apply_action(ReaderAction::advance(), 3.0);
        for (int i = 0; i < 5; ++i)
            core.apply_state({4.0 + i * 0.1, {{"arousal", arousal}}, "sim"});
        core.apply_action(ReaderAction::advance(), 6.0);
        CHECK(core.page().knot == (arousal > 0.5 ? "flee" : "linger"));
        CHECK(core.director_variables().at("phys_cave_arousal") == doctest::Approx(arousal));
    }
}

TEST_CASE("session: replaying inputs and reader log reproduces the session")
{
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        std::string text = test::random_story(rng);
        auto graph = graph_of(text.c_str());
        double clock_t = 0.0;
        CoreConfig cfg;
        cfg.debounce = 0.5;
        cfg.clock = [&] { return clock_t; };
        SessionCore live(graph, cfg);
        live.begin(0.0);

        // Two input sources interleaved with reader actions in a random
        // arrival order.
        std::map<std::string, std::vector<director::StateUpdate>> inputs;
        std::uniform_real_distribution<double> u(0, 1);
        double tin = 0; // both sources share one clock domain
        for (int step = 0; step < 200 && !live.finished(); ++step) {
            double r = u(rng);
            if (r < 0.4) {
                tin += 0.05;
                director::StateUpdate s{tin, {{"valence", u(rng)}, {"arousal", u(rng)}}, "a"};
                inputs["a"].push_back(s);
                live.apply_state(s);
            } else if (r < 0.7) {
                tin += 0.07;
                director::StateUpdate s{tin, {{"arousal", u(rng)}}, "b"};
                inputs["b"].push_back(s);
                live.apply_state(s);
            } else {
                clock_t += u(rng);
                auto st = live.state();
                ReaderAction a = st.awaiting_choice
                                     ? ReaderAction::choose(std::uniform_int_distribution<std::size_t>(
                                           0, st.available_choices.size())(rng)) // sometimes out of range
                                     : ReaderAction::advance();
                live.apply_action(a, clock_t);
            }
        }
        live.apply_action({ReaderAction::Kind::Stop, 0, {}}, clock_t + 1);

        auto log = reader_log_from_jsonl(reader_log_to_jsonl(live.reader_log()));
        ReplayResult rep = replay_session(graph, cfg, inputs, log);
        CHECK(rep.log == live.reader_log());
        auto ev = live.events();
        REQUIRE(rep.events.size() == ev.size());
        for (std::size_t i = 0; i < ev.size(); ++i)
            CHECK(story::describe(rep.events[i]) == story::describe(ev[i]));
        auto vars = live.director_variables();
        REQUIRE(rep.variables.size() == vars.size());
        for (const auto &[k, v] : vars)
            CHECK(std::memcmp(&v, &rep.variables.at(k), sizeof v) == 0);
        CHECK(rep.state.variables == live.state().variables);
    }
}

TEST_CASE("session: WebSocket reader protocol")
{
    CoreConfig cfg;
    cfg.debounce = 0.0;
    SessionCore core(graph_of(test::kDungeonStory), cfg);
    WsServer server(core, "127.0.0.1", 0);
    core.start();
    REQUIRE(server.port() != 0);

    WsClient reader("127.0.0.1", server.port());
    json page = next_of_type(reader, "page");
    CHECK(page["knot"] == "entrance");
    CHECK(page["choices"] == json::array({"Enter the dungeon", "Walk into the forest"}));

    // A second reader is turned away.
    WsClient second("127.0.0.1", server.port());
    CHECK(json::parse(second.receive())["type"] == "error");
    CHECK(category_of([&] { second.receive(); }) == Error::Category::Network);

    reader.send(R"({"type":"bogus"})");
    CHECK(next_of_type(reader, "error")["message"].get<std::string>().find("bogus") != std::string::npos);
    reader.send(R"({"type":"choose","index":7})");
    CHECK(next_of_type(reader, "rejected")["action"] == "choose");
    reader.send(R"({"type":"choose","index":0})");
    CHECK(next_of_type(reader, "page")["knot"] == "dungeon");
    reader.send(R"({"type":"advance"})");
    CHECK(next_of_type(reader, "page")["page_index"] == 1);
    reader.send(R"({"type":"choose","index":0})");
    CHECK(next_of_type(reader, "page")["knot"] == "forest");
    reader.send(R"({"type":"advance"})");
    next_of_type(reader, "end");

    // After the reader leaves, a new one may connect and sees the current state.
    reader.close();
    CHECK(wait_for([&] {
        try {
            WsClient again("127.0.0.1", server.port());
            return json::parse(again.receive())["type"] == "end";
        } catch (const Error &) {
            return false;
        }
    }));
    core.stop();
    server.stop();

    // The address is taken while a server holds it.
    WsServer holder(core, "127.0.0.1", 0);
    CHECK(category_of([&] { WsServer clash(core, "127.0.0.1", holder.port()); }) == Error::Category::Network);
}

TEST_CASE("session: config validation")
{
    TempDir dir;
    std::string story = dir.file("s.pif", kSteerStory);
    SessionConfig c = SessionConfig::from_json(R"({"story": "s.pif", "input": {"simulator": ""},
        "policy": "biofeedback", "ui": {"port": 0}, "debounce": 0.5})",
                                               dir.path.string());
    CHECK(c.story_path == story);
    CHECK(c.simulator == std::string());
    CHECK(c.policy == director::Policy::Biofeedback);
    CHECK(c.ui_port == 0);
    CHECK_NOTHROW(c.validate());

    auto invalid = [&](const std::string &text) {
        return category_of([&] { SessionConfig::from_json(text, dir.path.string()).validate(); });
    };
    CHECK(invalid(R"({"story": "s.pif"})") == Error::Category::Validation);
    CHECK(invalid(R"({"story": "s.pif", "input": {"simulator": "", "replay": "s.pif"}})") == Error::Category::Validation);
    CHECK(invalid(R"({"story": "missing.pif", "input": {"simulator": ""}})") == Error::Category::Validation);
    CHECK(invalid(R"({"story": "s.pif", "input": {"replay": "none.pifrec"}})") == Error::Category::Validation);
    CHECK(invalid(R"({"story": "s.pif", "input": {"simulator": ""}, "policy": "covert"})") ==
          Error::Category::Validation);
    CHECK(invalid(R"({"story": "s.pif", "input": {"simulator": ""}, "colour": 1})") == Error::Category::Validation);
    CHECK(invalid(R"({"story": "s.pif", "input": {"simulator": ""}, "models": {"arousal": "m.json"}})") ==
          Error::Category::Validation);
    CHECK(category_of([&] { load_story(dir.file("bad.pif", "== a ==\n-> nowhere\n")); }) ==
          Error::Category::Validation);
}

TEST_CASE("session: simulator-backed session end to end")
{
    TempDir dir;
    dir.file("s.pif", kSteerStory);
    std::string rec_path = (dir.path / "session.pifrec").string();
    std::string log_path = (dir.path / "reader.jsonl").string();
    SessionConfig cfg = SessionConfig::from_json(
        R"({"story": "s.pif", "input": {"simulator": ""}, "policy": "biofeedback", "ui": {"port": 0},
            "debounce": 0.05, "sim_rate": 50, "record": "session.pifrec", "reader_log": "reader.jsonl"})",
        dir.path.string());
    {
        Session s(cfg);
        s.start();
        WsClient reader("127.0.0.1", s.ui_port());
        CHECK(next_of_type(reader, "page")["knot"] == "intro");
        reader.send(R"({"type":"sim","arousal":0.95})");
        // Wait until the steered value is visible to the reader.
        for (;;) {
            json st = next_of_type(reader, "state");
            if (st.value("phys_arousal", 0.0) > 0.9)
                break;
        }
        reader.send(R"({"type":"advance"})");
        CHECK(next_of_type(reader, "page")["page_index"] == 1);
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        reader.send(R"({"type":"advance"})");
        CHECK(next_of_type(reader, "page")["knot"] == "flee");
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        reader.send(R"({"type":"advance"})");
        next_of_type(reader, "end");
        reader.close();
        s.stop();
    }

    // Balanced, properly nested tag markers in the recording.
    transport::Recording rec = transport::read_recording(rec_path);
    auto markers = rec.samples_of("pif-markers");
    std::vector<std::string> stack, labels;
    for (const auto &m : markers) {
        labels.push_back(m.marker);
        if (m.marker.rfind("TAG_START:", 0) == 0)
            stack.push_back(m.marker.substr(10));
        else if (m.marker.rfind("TAG_STOP:", 0) == 0) {
            REQUIRE_FALSE(stack.empty());
            CHECK(stack.back() == m.marker.substr(9));
            stack.pop_back();
        }
    }
    CHECK(stack.empty());
    CHECK(std::count(labels.begin(), labels.end(), "TAG_START:CAVE") == 1);
    CHECK(std::find(labels.begin(), labels.end(), "BRANCH:flee") != labels.end());
    CHECK(rec.stream_index("pif-sim-state").has_value());

    // The recorded input plus the reader log reproduce the branch sequence.
    std::ifstream lf(log_path);
    std::string log_text((std::istreambuf_iterator<char>(lf)), std::istreambuf_iterator<char>());
    auto log = reader_log_from_jsonl(log_text);
    REQUIRE_FALSE(log.empty());
    CHECK(log.back().action.kind == ReaderAction::Kind::Stop);
    CoreConfig cc;
    cc.debounce = 0.05;
    cc.director.policy = director::Policy::Biofeedback;
    ReplayResult rep = replay_session(load_story(cfg.story_path), cc, updates_from_recording(rec, default_state_keys()), log);
    CHECK(rep.state.finished);
    std::vector<std::string> branches;
    for (const auto &e : rep.events)
        if (e.kind == story::EngineEventKind::BranchTaken)
            branches.push_back(e.target);
    CHECK(branches == std::vector<std::string>{"flee"});
}

TEST_CASE("session: state latency at 512 Hz")
{
    CoreConfig cfg;
    SessionCore core(graph_of(kSteerStory), cfg);
    std::vector<double> lat;
    std::mutex mu;
    core.set_state_hook([&](const director::StateUpdate &u, double visible) {
        std::lock_guard lock(mu);
        lat.push_back(visible - u.t);
    });
    transport::Registry reg;
    transport::Outlet out = reg.open_outlet(
        transport::StreamInfo{"state", transport::StreamKind::Signal, 1, 512, {"arousal"}, "state"}.normalized());
    transport::Inlet in = reg.open_inlet("state");
    core.start();
    std::thread pump([&] {
        std::size_t got = 0;
        while (got < 200) {
            for (const auto &s : in.pull(64, std::chrono::milliseconds(100))) {
                core.post_state(update_from_sample(in.info(), s));
                ++got;
            }
        }
    });
    auto next = std::chrono::steady_clock::now();
    for (int i = 0; i < 200; ++i) {
        next += std::chrono::microseconds(1953);
        std::this_thread::sleep_until(next);
        out.push(transport::local_clock(), {0.5});
    }
    pump.join();
    core.sync();
    core.stop();
    REQUIRE(lat.size() == 200);
    std::nth_element(lat.begin(), lat.begin() + 100, lat.end());
    CHECK(lat[100] <= 0.1);
    CHECK(core.state().variables.at("phys_arousal") == story::Value(0.5));
}
