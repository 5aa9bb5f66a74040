#include "transport/recording.hpp"

#include <ctime>
#include <istream>
#include <ostream>
#include <sstream>

#include "transport/codec.hpp"

namespace pif::transport {

std::optional<std::size_t> Recording::stream_index(const std::string &id_or_name) const
{
    for (std::size_t i = 0; i < streams.size(); ++i)
        if (streams[i].source_id == id_or_name)
            return i;
    for (std::size_t i = 0; i < streams.size(); ++i)
        if (streams[i].name == id_or_name)
            return i;
    return std::nullopt;
}

std::vector<Sample> Recording::samples_of(const std::string &id_or_name) const
{
    std::vector<Sample> out;
    auto idx = stream_index(id_or_name);
    if (!idx)
        return out;
    for (const RecordedSample &r : samples)
        if (r.stream == *idx)
            out.push_back(r.sample);
    return out;
}

std::size_t Recording::add_stream(const StreamInfo &info)
{
    StreamInfo n = info.normalized();
    for (const StreamInfo &s : streams)
        if (s.source_id == n.source_id)
            throw invalid_argument("duplicate source_id '" + n.source_id + "'");
    streams.push_back(std::move(n));
    return streams.size() - 1;
}

std::string wall_clock_now_iso()
{
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Parsing ---------------------------------------------------------------------

LoadResult parse_recording(std::istream &in)
{
    LoadResult out;
    Recording &rec = out.recording;
    std::vector<std::optional<double>> last_t;
    std::uint64_t offset = 0;
    std::size_t line_no = 0;
    std::string line;
    bool have_header = false;

    std::uint64_t start = 0;
    auto fail = [&](std::string msg) {
        out.corruption = Corruption{start, line_no, std::move(msg)};
    };

    while (true) {
        start = offset;
        if (!std::getline(in, line))
            break;
        ++line_no;
        bool had_newline = !in.eof();
        std::uint64_t next = start + line.size() + (had_newline ? 1 : 0);
        if (line.empty() && had_newline) {
            offset = next;
            continue;
        }
        // Writers terminate every record, so a missing newline means the
        // last write was cut short even if the fragment happens to parse.
        if (!had_newline) {
            fail("truncated record");
            return out;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception &) {
            fail("malformed record");
            return out;
        }
        try {
            std::string type = j.at("type").get<std::string>();
            if (!have_header) {
                if (type != "session" || j.value("format", "") != "pifrec")
                    throw validation_error("missing session header");
                rec.header.wall_clock_start = j.value("wall_clock_start", "");
                if (j.contains("meta"))
                    for (auto &[k, v] : j.at("meta").items())
                        rec.header.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
                have_header = true;
            } else if (type == "stream") {
                rec.add_stream(info_from_json(j.at("info")));
                last_t.emplace_back();
            } else if (type == "sample") {
                auto idx = rec.stream_index(j.at("stream").get<std::string>());
                if (!idx)
                    throw validation_error("sample for undeclared stream");
                Sample s = sample_from_json(j, rec.streams[*idx]);
                if (last_t[*idx] && s.timestamp < *last_t[*idx])
                    throw validation_error("timestamp regression");
                last_t[*idx] = s.timestamp;
                rec.samples.push_back({*idx, std::move(s)});
            } else {
                throw validation_error("unknown record type '" + type + "'");
            }
        } catch (const json::exception &e) {
            fail(std::string("bad record: ") + e.what());
            return out;
        } catch (const Error &e) {
            fail(e.what());
            return out;
        }
        offset = next;
    }
    start = offset;
    if (!have_header)
        fail("missing session header");
    return out;
}

LoadResult load_recording(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw io_error("cannot open '" + path.string() + "'");
    return parse_recording(in);
}

Recording read_recording(const std::filesystem::path &path)
{
    LoadResult r = load_recording(path);
    if (r.corruption)
        throw Error(Error::Category::Corrupt, path.string() + ": corrupt at byte " +
                                                  std::to_string(r.corruption->byte_offset) + " (line " +
                                                  std::to_string(r.corruption->line) + "): " + r.corruption->message);
    return std::move(r.recording);
}

// Writing ---------------------------------------------------------------------

RecordingWriter::RecordingWriter(std::ostream &out, const SessionHeader &header, const std::vector<StreamInfo> &streams)
    : out_(out), streams_(streams)
{
    json h{{"type", "session"}, {"format", "pifrec"}, {"version", 1}, {"wall_clock_start", header.wall_clock_start}};
    h["meta"] = json::object();
    for (const auto &[k, v] : header.meta)
        h["meta"][k] = v;
    line(h.dump());
    for (const StreamInfo &s : streams_)
        line(json{{"type", "stream"}, {"info", info_to_json(s)}}.dump());
    flush();
}

void RecordingWriter::write(std::size_t stream, const Sample &s)
{
    json j{{"type", "sample"}, {"stream", streams_.at(stream).source_id}};
    Sample q = s;
    q.timestamp = quantize_timestamp(s.timestamp);
    sample_to_json(q, j);
    line(j.dump());
}

void RecordingWriter::line(const std::string &s)
{
    out_ << s << '\n';
    if (!out_)
        throw io_error("write failed (disk full?)");
}

void RecordingWriter::flush()
{
    out_.flush();
    if (!out_)
        throw io_error("flush failed (disk full?)");
}

void write_recording(std::ostream &out, const Recording &rec)
{
    RecordingWriter w(out, rec.header, rec.streams);
    for (const RecordedSample &r : rec.samples)
        w.write(r.stream, r.sample);
    w.flush();
}

void save_recording(const std::filesystem::path &path, const Recording &rec)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw io_error("cannot write '" + path.string() + "'");
    write_recording(out, rec);
}

// Recorder --------------------------------------------------------------------

std::uint64_t RecordingSummary::total_samples() const
{
    std::uint64_t n = 0;
    for (const auto &s : streams)
        n += s.samples;
    return n;
}

std::uint64_t RecordingSummary::total_overflow() const
{
    std::uint64_t n = 0;
    for (const auto &s : streams)
        n += s.overflow;
    return n;
}

Recorder::Recorder(const std::filesystem::path &sink, std::vector<Inlet> inlets, std::map<std::string, std::string> meta)
    : path_(sink), inlets_(std::move(inlets)), written_(inlets_.size(), 0)
{
    file_.open(sink, std::ios::binary | std::ios::trunc);
    if (!file_)
        throw io_error("cannot write '" + sink.string() + "'");
    std::vector<StreamInfo> infos;
    for (const Inlet &in : inlets_)
        infos.push_back(in.info());
    SessionHeader h{wall_clock_now_iso(), std::move(meta)};
    writer_ = std::make_unique<RecordingWriter>(file_, h, infos);
}

Recorder::~Recorder()
{
    try {
        if (running_)
            stop();
    } catch (...) {
    }
}

std::size_t Recorder::poll(std::chrono::duration<double> timeout)
{
    std::lock_guard lk(mu_);
    std::size_t n = 0;
    for (std::size_t i = 0; i < inlets_.size(); ++i) {
        for (const Sample &s : inlets_[i].pull(SIZE_MAX)) {
            writer_->write(i, s);
            ++written_[i];
            ++n;
        }
    }
    if (n == 0 && timeout.count() > 0 && !inlets_.empty()) {
        // Wait on the first live inlet, then sweep again without waiting.
        for (std::size_t i = 0; i < inlets_.size(); ++i) {
            if (inlets_[i].exhausted())
                continue;
            for (const Sample &s : inlets_[i].pull(SIZE_MAX, timeout)) {
                writer_->write(i, s);
                ++written_[i];
                ++n;
            }
            break;
        }
    }
    if (n)
        writer_->flush();
    return n;
}

bool Recorder::all_exhausted() const
{
    for (const Inlet &in : inlets_)
        if (!in.exhausted())
            return false;
    return true;
}

void Recorder::start()
{
    if (running_.exchange(true))
        throw state_error("recorder already running");
    thread_ = std::thread([this] {
        while (running_) {
            poll(std::chrono::milliseconds(20));
            if (delay_.count() > 0)
                std::this_thread::sleep_for(delay_);
        }
    });
}

RecordingSummary Recorder::stop()
{
    running_ = false;
    if (thread_.joinable())
        thread_.join();
    while (poll() > 0) {
    }
    writer_->flush();
    return summary();
}

RecordingSummary Recorder::summary() const
{
    std::lock_guard lk(mu_);
    RecordingSummary s;
    s.path = path_;
    for (std::size_t i = 0; i < inlets_.size(); ++i)
        s.streams.push_back({inlets_[i].info().source_id, written_[i], inlets_[i].overflow()});
    return s;
}

// Replay ----------------------------------------------------------------------

Recording rebase(const Recording &rec, double base)
{
    Recording out = rec;
    if (out.samples.empty())
        return out;
    double t0 = out.samples.front().sample.timestamp;
    for (const RecordedSample &r : out.samples)
        t0 = std::min(t0, r.sample.timestamp);
    for (RecordedSample &r : out.samples)
        r.sample.timestamp = base + (r.sample.timestamp - t0);
    return out;
}

Replayer::Replayer(const Recording &rec, Registry &registry) : rec_(rec)
{
    for (const StreamInfo &s : rec_.streams)
        outlets_.push_back(registry.open_outlet(s));
}

std::vector<StreamInfo> Replayer::streams() const
{
    return rec_.streams;
}

void Replayer::run(ReplaySpeed speed, const ClockFn &clock)
{
    double start = clock();
    Recording r = rebase(rec_, start);
    for (const RecordedSample &s : r.samples) {
        if (speed == ReplaySpeed::Realtime) {
            for (double wait; !cancelled_ && (wait = s.sample.timestamp - clock()) > 0;)
                std::this_thread::sleep_for(std::chrono::duration<double>(std::min(wait, 0.05)));
        }
        if (cancelled_)
            return;
        outlets_.at(s.stream).push(s.sample);
    }
}

void Replayer::close()
{
    for (Outlet &o : outlets_)
        o.close();
}

} // namespace pif::transport
