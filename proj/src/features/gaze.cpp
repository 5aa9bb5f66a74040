#include <algorithm>
#include <cmath>

#include "common/error.hpp"
#include "features/features.hpp"

namespace pif::features {

namespace {

// Guards the gap classification against representation error in
// differences of timestamps.
constexpr double kEps = 1e-9;

} // namespace

bool within_display(double x, double y)
{
    return x >= -0.1 && x <= 1.1 && y >= -0.1 && y <= 1.1;
}

std::vector<OffScreenGap> offscreen_gaps(const GazeTrace &g)
{
    std::vector<OffScreenGap> out;
    if (g.empty())
        return out;
    std::optional<std::size_t> prev_on;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!g[i].on_screen)
            continue;
        if (!prev_on) {
            if (i > 0)
                out.push_back({g.front().t, g[i].t});
        } else if (i > *prev_on + 1) {
            out.push_back({g[*prev_on].t, g[i].t});
        }
        prev_on = i;
    }
    if (!prev_on)
        out.push_back({g.front().t, g.back().t});
    else if (*prev_on + 1 < g.size())
        out.push_back({g[*prev_on].t, g.back().t});
    return out;
}

BlinkStats detect_blinks(const GazeTrace &g)
{
    BlinkStats s;
    double total = 0;
    for (const OffScreenGap &gap : offscreen_gaps(g)) {
        double d = gap.duration();
        if (d >= kBlinkMin - kEps && d <= kBlinkMax + kEps) {
            ++s.count;
            total += d;
        }
    }
    if (s.count)
        s.mean_duration = total / s.count;
    return s;
}

double mind_wandering(const GazeTrace &g)
{
    double total = 0;
    for (const OffScreenGap &gap : offscreen_gaps(g))
        if (gap.duration() > kBlinkMax + kEps)
            total += gap.duration();
    return total;
}

double Saccade::length() const
{
    return std::hypot(x1 - x0, y1 - y0);
}

double Saccade::angle_deg() const
{
    return std::abs(std::atan2(y1 - y0, x1 - x0)) * 180.0 / M_PI;
}

std::vector<Fixation> detect_fixations(const GazeTrace &g, const IdtOptions &opt)
{
    std::vector<Fixation> out;
    std::size_t n = g.size();
    auto dispersion = [&](std::size_t a, std::size_t b) {
        double x0 = g[a].x, x1 = g[a].x, y0 = g[a].y, y1 = g[a].y;
        for (std::size_t k = a + 1; k <= b; ++k) {
            x0 = std::min(x0, g[k].x);
            x1 = std::max(x1, g[k].x);
            y0 = std::min(y0, g[k].y);
            y1 = std::max(y1, g[k].y);
        }
        return (x1 - x0) + (y1 - y0);
    };
    std::size_t seg = 0;
    while (seg < n) {
        // One run of consecutive on-screen samples at a time.
        while (seg < n && !g[seg].on_screen)
            ++seg;
        std::size_t end = seg;
        while (end < n && g[end].on_screen)
            ++end;
        std::size_t i = seg;
        while (i < end) {
            std::size_t j = i;
            while (j < end && g[j].t - g[i].t < opt.min_duration - kEps)
                ++j;
            if (j >= end)
                break;
            if (dispersion(i, j) > opt.max_dispersion) {
                ++i;
                continue;
            }
            while (j + 1 < end && dispersion(i, j + 1) <= opt.max_dispersion)
                ++j;
            Fixation f;
            f.first = i;
            f.last = j;
            f.start = g[i].t;
            f.end = g[j].t;
            for (std::size_t k = i; k <= j; ++k) {
                f.cx += g[k].x;
                f.cy += g[k].y;
            }
            f.cx /= static_cast<double>(j - i + 1);
            f.cy /= static_cast<double>(j - i + 1);
            out.push_back(f);
            i = j + 1;
        }
        seg = end;
    }
    return out;
}

std::vector<Saccade> saccades_between(const GazeTrace &g, const std::vector<Fixation> &fix)
{
    std::vector<Saccade> out;
    for (std::size_t k = 0; k + 1 < fix.size(); ++k) {
        std::size_t a = fix[k].last, b = fix[k + 1].first;
        // Movements across an off-screen gap are not saccades.
        bool broken = false;
        for (std::size_t i = a; i <= b; ++i)
            broken = broken || !g[i].on_screen;
        if (broken)
            continue;
        Saccade s;
        s.i0 = a;
        s.i1 = b;
        s.start = g[a].t;
        s.end = g[b].t;
        s.x0 = g[a].x;
        s.y0 = g[a].y;
        s.x1 = g[b].x;
        s.y1 = g[b].y;
        out.push_back(s);
    }
    return out;
}

namespace {

std::pair<double, double> position_at(const GazeTrace &g, std::size_t i0, std::size_t i1, double t)
{
    for (std::size_t k = i0; k < i1; ++k) {
        if (t <= g[k + 1].t) {
            double span = g[k + 1].t - g[k].t;
            double f = span > 0 ? (t - g[k].t) / span : 0.0;
            return {g[k].x + f * (g[k + 1].x - g[k].x), g[k].y + f * (g[k + 1].y - g[k].y)};
        }
    }
    return {g[i1].x, g[i1].y};
}

} // namespace

std::vector<Saccade> split_saccades(const GazeTrace &g, const std::vector<Saccade> &sac, double limit)
{
    std::vector<Saccade> out;
    for (const Saccade &s : sac) {
        if (s.duration() <= limit + kEps) {
            out.push_back(s);
            continue;
        }
        double t = s.start;
        auto [px, py] = std::pair{s.x0, s.y0};
        while (t < s.end - kEps) {
            double t_next = std::min(t + limit, s.end);
            auto [nx, ny] = position_at(g, s.i0, s.i1, t_next);
            Saccade piece = s;
            piece.start = t;
            piece.end = t_next;
            piece.x0 = px;
            piece.y0 = py;
            piece.x1 = nx;
            piece.y1 = ny;
            out.push_back(piece);
            t = t_next;
            px = nx;
            py = ny;
        }
    }
    return out;
}

FixSacStats fixations_saccades(const GazeTrace &g, const IdtOptions &opt)
{
    FixSacStats s;
    auto fix = detect_fixations(g, opt);
    s.n_fixations = static_cast<int>(fix.size());
    if (!fix.empty()) {
        double d = 0;
        for (const Fixation &f : fix)
            d += f.duration();
        s.mean_fixation_dur = d / static_cast<double>(fix.size());
    }
    auto sac = saccades_between(g, fix);
    s.n_saccades = static_cast<int>(sac.size());
    if (!sac.empty()) {
        double len = 0, ang = 0;
        for (const Saccade &x : sac) {
            len += x.length();
            ang += x.angle_deg();
        }
        s.mean_saccade_len = len / static_cast<double>(sac.size());
        s.mean_saccade_angle = ang / static_cast<double>(sac.size());
    }
    auto split = split_saccades(g, sac);
    s.n_split_saccades = static_cast<int>(split.size());
    if (!split.empty()) {
        double len = 0;
        for (const Saccade &x : split)
            len += x.length();
        s.mean_split_saccade_len = len / static_cast<double>(split.size());
    }
    return s;
}

PupilStats pupil_stats(const GazeTrace &g)
{
    std::vector<double> v;
    for (const GazeSample &s : g)
        if (s.on_screen && std::isfinite(s.pupil))
            v.push_back(s.pupil);
    PupilStats p;
    if (!v.empty()) {
        p.mean = mean(v);
        p.sd = pstdev(v);
    }
    return p;
}

// Head --------------------------------------------------------------------------

double Quat::norm() const
{
    return std::sqrt(w * w + x * x + y * y + z * z);
}

Quat Quat::axis_angle(double ax, double ay, double az, double angle)
{
    double n = std::sqrt(ax * ax + ay * ay + az * az);
    double s = std::sin(angle / 2) / n;
    return {std::cos(angle / 2), ax * s, ay * s, az * s};
}

Quat operator*(const Quat &a, const Quat &b)
{
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z, a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x, a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

double geodesic(const Quat &a, const Quat &b)
{
    // 2 acos(|a.b|), via atan2 on the relative rotation for accuracy near 0.
    Quat r = a.conj() * b;
    double v = std::sqrt(r.x * r.x + r.y * r.y + r.z * r.z);
    return 2.0 * std::atan2(v, std::abs(r.w));
}

HeadStats head_motion(const HeadTrace &h)
{
    for (const HeadSample &s : h)
        if (std::abs(s.q.norm() - 1.0) > 1e-6)
            throw invalid_argument("head trace: non-unit quaternion at t=" + std::to_string(s.t));
    HeadStats out;
    if (h.size() < 2)
        return out;
    double travel = 0;
    for (std::size_t i = 1; i < h.size(); ++i)
        travel += geodesic(h[i - 1].q, h[i].q);
    out.travel = travel;
    double span = h.back().t - h.front().t;
    if (span > 0)
        out.mean_speed = travel / span;
    return out;
}

} // namespace pif::features
