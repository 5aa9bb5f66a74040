#include "classify/classify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "common/error.hpp"

namespace pif::classify {

using nlohmann::json;

const char *class_name(Class c)
{
    return c == Class::A ? "A" : "B";
}

// Dataset ------------------------------------------------------------------------

std::vector<std::string> Dataset::subjects() const
{
    std::vector<std::string> out;
    for (const Observation &o : observations)
        if (std::find(out.begin(), out.end(), o.subject) == out.end())
            out.push_back(o.subject);
    return out;
}

void Dataset::validate() const
{
    for (const Observation &o : observations)
        if (o.values.size() != registry.size())
            throw validation_error("observation of subject '" + o.subject + "' has " + std::to_string(o.values.size()) +
                                   " features, registry has " + std::to_string(registry.size()));
    std::vector<std::string> subs = subjects();
    if (subs.size() < 2)
        throw validation_error("dataset needs at least 2 subjects, has " + std::to_string(subs.size()));
    for (const std::string &s : subs) {
        bool a = false, b = false;
        for (const Observation &o : observations)
            if (o.subject == s)
                (o.label == Class::A ? a : b) = true;
        if (!a || !b)
            throw validation_error("subject '" + s + "' lacks an observation of class " + (a ? class_b : class_a));
    }
}

Dataset Dataset::without_subject(const std::string &s) const
{
    Dataset d = *this;
    d.observations.clear();
    for (const Observation &o : observations)
        if (o.subject != s)
            d.observations.push_back(o);
    return d;
}

Dataset Dataset::only_subject(const std::string &s) const
{
    Dataset d = *this;
    d.observations.clear();
    for (const Observation &o : observations)
        if (o.subject == s)
            d.observations.push_back(o);
    return d;
}

Dataset dataset_from_features(const std::vector<features::FeatureVector> &rows, const std::string &class_a,
                              const std::string &class_b, const std::string &construct)
{
    if (class_a == class_b)
        throw invalid_argument("the two classes must differ");
    Dataset d;
    d.construct = construct;
    d.class_a = class_a;
    d.class_b = class_b;
    if (!rows.empty())
        d.registry = rows.front().names;
    for (const features::FeatureVector &fv : rows) {
        if (!fv.label || (*fv.label != class_a && *fv.label != class_b))
            continue;
        if (fv.names != d.registry)
            throw validation_error("feature rows use different registries");
        d.observations.push_back({fv.values, fv.subject, *fv.label == class_a ? Class::A : Class::B, fv.story});
    }
    return d;
}

// Ranks --------------------------------------------------------------------------

std::vector<double> average_ranks(const std::vector<double> &v)
{
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]])
            ++j;
        double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

namespace {

double median_of(std::vector<double> v)
{
    if (v.empty())
        return 0.0;
    return features::median(std::move(v));
}

// Ranks the rows of one subject, feature by feature.
Eigen::MatrixXd rank_rows(const std::vector<const std::vector<Missing> *> &rows, std::size_t d,
                          const std::string &subject)
{
    std::size_t n = rows.size();
    if (n < 2)
        throw validation_error("subject '" + subject + "' has a single observation; ranks are undefined");
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) {
        std::vector<double> present;
        for (const auto *r : rows)
            if ((*r)[j])
                present.push_back(*(*r)[j]);
        double med = median_of(present);
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i)
            col[i] = (*rows[i])[j] ? *(*rows[i])[j] : med;
        std::vector<double> r = average_ranks(col);
        for (std::size_t i = 0; i < n; ++i)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[i];
    }
    return out;
}

} // namespace

Eigen::MatrixXd rank_normalize(const Dataset &d)
{
    std::size_t dim = d.registry.size();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(d.observations.size()), static_cast<Eigen::Index>(dim));
    for (const std::string &s : d.subjects()) {
        std::vector<std::size_t> idx;
        std::vector<const std::vector<Missing> *> rows;
        for (std::size_t i = 0; i < d.observations.size(); ++i)
            if (d.observations[i].subject == s) {
                idx.push_back(i);
                rows.push_back(&d.observations[i].values);
            }
        Eigen::MatrixXd r = rank_rows(rows, dim, s);
        for (std::size_t k = 0; k < idx.size(); ++k)
            out.row(static_cast<Eigen::Index>(idx[k])) = r.row(static_cast<Eigen::Index>(k));
    }
    return out;
}

// PCA ----------------------------------------------------------------------------

Eigen::MatrixXd Pca::project(const Eigen::MatrixXd &x) const
{
    return (x.rowwise() - mean.transpose()) * basis;
}

Pca fit_pca(const Eigen::MatrixXd &x, double retain)
{
    Eigen::Index n = x.rows(), d = x.cols();
    if (n < 2 || d < 1)
        throw validation_error("PCA needs at least 2 observations and 1 feature");
    Pca p;
    p.mean = x.colwise().mean().transpose();
    Eigen::MatrixXd xc = x.rowwise() - p.mean.transpose();
    double denom = static_cast<double>(n - 1);
    p.total_variance = xc.squaredNorm() / denom;
    if (!(p.total_variance > 0))
        throw validation_error("training features have no variance");

    Eigen::VectorXd eval;
    Eigen::MatrixXd evec; // d x m, columns sorted by decreasing eigenvalue
    if (n >= d) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es((xc.transpose() * xc) / denom);
        eval = es.eigenvalues().reverse();
        evec = es.eigenvectors().rowwise().reverse();
    } else {
        // Gram-matrix route: eigenvectors u of X X^T map to X^T u / sqrt((n-1) lambda).
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es((xc * xc.transpose()) / denom);
        eval = es.eigenvalues().reverse();
        Eigen::MatrixXd u = es.eigenvectors().rowwise().reverse();
        evec = Eigen::MatrixXd::Zero(d, n);
        for (Eigen::Index i = 0; i < n; ++i)
            if (eval(i) > 1e-14 * p.total_variance)
                evec.col(i) = xc.transpose() * u.col(i) / std::sqrt(denom * eval(i));
    }

    double cum = 0;
    Eigen::Index k = 0;
    while (k < eval.size()) {
        cum += std::max(0.0, eval(k));
        ++k;
        if (cum >= retain * p.total_variance * (1 - 1e-12))
            break;
    }
    p.basis = evec.leftCols(k);
    p.variance = eval.head(k).cwiseMax(0.0);
    // Deterministic orientation: the largest-magnitude loading is positive.
    for (Eigen::Index c = 0; c < k; ++c) {
        Eigen::Index arg = 0;
        p.basis.col(c).cwiseAbs().maxCoeff(&arg);
        if (p.basis(arg, c) < 0)
            p.basis.col(c) *= -1.0;
    }
    return p;
}

// LDA ----------------------------------------------------------------------------

double Lda::posterior(double score) const
{
    if (!(pooled_var > 0) || !(separation > 0))
        return score > 0 ? 1.0 : score < 0 ? 0.0 : 0.5;
    double logit = score * separation / pooled_var;
    return 1.0 / (1.0 + std::exp(-logit));
}

Lda fit_lda(const Eigen::MatrixXd &z, const std::vector<bool> &label_a, std::vector<std::string> *warnings)
{
    Eigen::Index n = z.rows(), k = z.cols();
    if (static_cast<std::size_t>(n) != label_a.size())
        throw invalid_argument("LDA: label count does not match rows");
    Eigen::VectorXd ma = Eigen::VectorXd::Zero(k), mb = Eigen::VectorXd::Zero(k);
    double na = 0, nb = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (label_a[static_cast<std::size_t>(i)]) {
            ma += z.row(i).transpose();
            ++na;
        } else {
            mb += z.row(i).transpose();
            ++nb;
        }
    }
    if (na == 0 || nb == 0)
        throw validation_error("LDA needs observations of both classes");
    ma /= na;
    mb /= nb;
    Eigen::MatrixXd sw = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd r = z.row(i).transpose() - (label_a[static_cast<std::size_t>(i)] ? ma : mb);
        sw += r * r.transpose();
    }

    Lda l;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sw, Eigen::EigenvaluesOnly);
    double emax = es.eigenvalues().maxCoeff(), emin = es.eigenvalues().minCoeff();
    Eigen::MatrixXd reg = sw;
    if (!(emax > 0) || emin <= 1e-10 * emax) {
        double lambda = 1e-6 * sw.trace() / static_cast<double>(k);
        if (!(lambda > 0))
            lambda = 1e-6;
        reg += lambda * Eigen::MatrixXd::Identity(k, k);
        l.ridge = true;
        if (warnings)
            warnings->push_back("within-class scatter is singular; ridge-regularized");
    }
    Eigen::VectorXd diff = ma - mb;
    Eigen::VectorXd w = reg.ldlt().solve(diff);
    if (!(w.norm() > 0) || !w.allFinite()) {
        w = Eigen::VectorXd::Zero(k);
        w(0) = 1.0;
        if (warnings)
            warnings->push_back("class means coincide; discriminant is degenerate");
    }
    l.w = w.normalized();
    l.b = -l.w.dot(ma + mb) / 2.0;
    l.separation = l.w.dot(diff);
    l.pooled_var = l.w.dot(sw * l.w) / std::max(1.0, static_cast<double>(n) - 2.0);
    return l;
}

// Pipeline -----------------------------------------------------------------------

Eigen::VectorXd Model::feature_weights() const
{
    return pca.basis * lda.w;
}

Model fit(const Dataset &d)
{
    d.validate();
    Model m;
    m.construct = d.construct;
    m.class_a = d.class_a;
    m.class_b = d.class_b;
    m.registry = d.registry;
    m.subjects = d.subjects();
    m.n_train = d.observations.size();

    std::size_t dim = d.registry.size();
    m.medians.resize(dim);
    m.reference.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        for (const Observation &o : d.observations)
            if (o.values[j])
                m.reference[j].push_back(*o.values[j]);
        std::sort(m.reference[j].begin(), m.reference[j].end());
        m.medians[j] = median_of(m.reference[j]);
    }
    std::vector<double> counts;
    for (const std::string &s : m.subjects)
        counts.push_back(static_cast<double>(std::count_if(d.observations.begin(), d.observations.end(),
                                                           [&](const Observation &o) { return o.subject == s; })));
    m.rank_scale = median_of(counts);

    Eigen::MatrixXd x = rank_normalize(d);
    m.pca = fit_pca(x);
    std::vector<bool> is_a;
    for (const Observation &o : d.observations)
        is_a.push_back(o.label == Class::A);
    m.lda = fit_lda(m.pca.project(x), is_a, &m.warnings);
    return m;
}

Prediction decide(const Model &m, const Eigen::VectorXd &ranked_row)
{
    Eigen::VectorXd z = m.pca.basis.transpose() * (ranked_row - m.pca.mean);
    Prediction p;
    p.score = m.lda.score(z);
    p.label = p.score >= 0 ? Class::A : Class::B;
    p.posterior_a = m.lda.posterior(p.score);
    return p;
}

namespace {

void check_arity(const Model &m, const std::vector<Missing> &x)
{
    if (x.size() != m.registry.size())
        throw validation_error("feature vector has " + std::to_string(x.size()) + " entries, model registry has " +
                               std::to_string(m.registry.size()));
}

} // namespace

std::vector<Prediction> predict_subject(const Model &m, const std::vector<Observation> &obs)
{
    std::vector<const std::vector<Missing> *> rows;
    for (const Observation &o : obs) {
        check_arity(m, o.values);
        rows.push_back(&o.values);
    }
    Eigen::MatrixXd r = rank_rows(rows, m.registry.size(), obs.empty() ? std::string() : obs.front().subject);
    std::vector<Prediction> out;
    for (Eigen::Index i = 0; i < r.rows(); ++i)
        out.push_back(decide(m, r.row(i).transpose()));
    return out;
}

Prediction predict(const Model &m, const std::vector<Missing> &x, const std::vector<std::vector<Missing>> &context,
                   RankMode mode)
{
    check_arity(m, x);
    if (mode == RankMode::Joint) {
        std::vector<const std::vector<Missing> *> rows;
        for (const auto &c : context) {
            check_arity(m, c);
            rows.push_back(&c);
        }
        rows.push_back(&x);
        Eigen::MatrixXd r = rank_rows(rows, m.registry.size(), "(context)");
        return decide(m, r.row(r.rows() - 1).transpose());
    }
    Eigen::VectorXd row(static_cast<Eigen::Index>(x.size()));
    for (std::size_t j = 0; j < x.size(); ++j) {
        double v = x[j] ? *x[j] : m.medians[j];
        const std::vector<double> &ref = m.reference[j];
        double u = 0.5;
        if (!ref.empty()) {
            auto lo = std::lower_bound(ref.begin(), ref.end(), v);
            auto hi = std::upper_bound(ref.begin(), ref.end(), v);
            u = (static_cast<double>(lo - ref.begin()) + 0.5 * static_cast<double>(hi - lo)) /
                static_cast<double>(ref.size());
        }
        row(static_cast<Eigen::Index>(j)) = 1.0 + u * (m.rank_scale - 1.0);
    }
    return decide(m, row);
}

std::vector<double> normalize_weights(const Eigen::VectorXd &w)
{
    double mx = w.size() ? w.cwiseAbs().maxCoeff() : 0.0;
    std::vector<double> out(static_cast<std::size_t>(w.size()));
    for (Eigen::Index i = 0; i < w.size(); ++i)
        out[static_cast<std::size_t>(i)] = mx > 0 ? w(i) / mx : 0.0;
    return out;
}

LosoResult loso_cv(const Dataset &d, bool parallel)
{
    d.validate();
    std::vector<std::string> subs = d.subjects();
    if (subs.size() < 3)
        throw validation_error("leave-one-subject-out needs at least 3 subjects");

    auto run_fold = [&d](const std::string &s) {
        try {
            Model m = fit(d.without_subject(s));
            std::vector<Prediction> p = predict_subject(m, d.only_subject(s).observations);
            return std::make_pair(std::move(m), std::move(p));
        } catch (const Error &e) {
            throw Error(e.category(), "fold '" + s + "': " + e.what());
        }
    };

    std::vector<std::pair<Model, std::vector<Prediction>>> folds;
    if (parallel) {
        std::vector<std::future<std::pair<Model, std::vector<Prediction>>>> fut;
        for (const std::string &s : subs)
            fut.push_back(std::async(std::launch::async, run_fold, s));
        for (auto &f : fut)
            folds.push_back(f.get());
    } else {
        for (const std::string &s : subs)
            folds.push_back(run_fold(s));
    }

    LosoResult r;
    std::size_t total = 0, correct = 0;
    std::vector<double> wsum(d.registry.size(), 0.0);
    for (std::size_t f = 0; f < subs.size(); ++f) {
        SubjectResult sr;
        sr.subject = subs[f];
        std::size_t k = 0;
        for (const Observation &o : d.observations) {
            if (o.subject != subs[f])
                continue;
            const Prediction &p = folds[f].second[k++];
            ++sr.n;
            sr.correct += p.label == o.label;
        }
        sr.predictions = folds[f].second;
        total += sr.n;
        correct += sr.correct;
        std::vector<double> w = normalize_weights(folds[f].first.feature_weights());
        for (std::size_t j = 0; j < w.size(); ++j)
            wsum[j] += w[j];
        r.per_subject.push_back(std::move(sr));
        r.folds.push_back(std::move(folds[f].first));
    }
    r.accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    r.weights = normalize_weights(Eigen::Map<Eigen::VectorXd>(wsum.data(), static_cast<Eigen::Index>(wsum.size())));
    return r;
}

// Model file ---------------------------------------------------------------------

namespace {

std::vector<double> to_vec(const Eigen::VectorXd &v)
{
    return {v.data(), v.data() + v.size()};
}

Eigen::VectorXd from_vec(const std::vector<double> &v)
{
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

constexpr int kModelVersion = 1;

} // namespace

std::string model_to_json(const Model &m)
{
    json basis = json::array();
    for (Eigen::Index c = 0; c < m.pca.basis.cols(); ++c)
        basis.push_back(to_vec(m.pca.basis.col(c)));
    json j = {
        {"format", "pif-model"},
        {"version", kModelVersion},
        {"construct", m.construct},
        {"classes", {m.class_a, m.class_b}},
        {"registry", m.registry},
        {"medians", m.medians},
        {"reference", m.reference},
        {"rank_scale", m.rank_scale},
        {"pca",
         {{"mean", to_vec(m.pca.mean)},
          {"basis", basis},
          {"variance", to_vec(m.pca.variance)},
          {"total_variance", m.pca.total_variance}}},
        {"lda",
         {{"w", to_vec(m.lda.w)},
          {"b", m.lda.b},
          {"separation", m.lda.separation},
          {"pooled_var", m.lda.pooled_var},
          {"ridge", m.lda.ridge}}},
        {"metadata",
         {{"n_components", m.pca.basis.cols()},
          {"subjects", m.subjects},
          {"n_train", m.n_train},
          {"warnings", m.warnings}}},
    };
    return j.dump(1);
}

Model model_from_json(const std::string &text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception &e) {
        throw validation_error(std::string("model file is not JSON: ") + e.what());
    }
    try {
        if (j.at("format") != "pif-model")
            throw validation_error("not a model file");
        if (j.at("version").get<int>() != kModelVersion)
            throw validation_error("unsupported model version " + j.at("version").dump());
        Model m;
        m.construct = j.at("construct").get<std::string>();
        m.class_a = j.at("classes").at(0).get<std::string>();
        m.class_b = j.at("classes").at(1).get<std::string>();
        m.registry = j.at("registry").get<std::vector<std::string>>();
        m.medians = j.at("medians").get<std::vector<double>>();
        m.reference = j.at("reference").get<std::vector<std::vector<double>>>();
        m.rank_scale = j.at("rank_scale").get<double>();
        const json &p = j.at("pca");
        m.pca.mean = from_vec(p.at("mean").get<std::vector<double>>());
        auto cols = p.at("basis").get<std::vector<std::vector<double>>>();
        std::size_t dim = m.registry.size();
        m.pca.basis.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (cols[c].size() != dim)
                throw validation_error("model basis column has wrong length");
            m.pca.basis.col(static_cast<Eigen::Index>(c)) = from_vec(cols[c]);
        }
        m.pca.variance = from_vec(p.at("variance").get<std::vector<double>>());
        m.pca.total_variance = p.at("total_variance").get<double>();
        const json &l = j.at("lda");
        m.lda.w = from_vec(l.at("w").get<std::vector<double>>());
        m.lda.b = l.at("b").get<double>();
        m.lda.separation = l.at("separation").get<double>();
        m.lda.pooled_var = l.at("pooled_var").get<double>();
        m.lda.ridge = l.at("ridge").get<bool>();
        const json &md = j.at("metadata");
        m.subjects = md.at("subjects").get<std::vector<std::string>>();
        m.n_train = md.at("n_train").get<std::size_t>();
        m.warnings = md.at("warnings").get<std::vector<std::string>>();
        if (m.medians.size() != dim || m.reference.size() != dim || static_cast<std::size_t>(m.pca.mean.size()) != dim ||
            m.lda.w.size() != m.pca.basis.cols() || m.pca.basis.cols() == 0)
            throw validation_error("model dimensions are inconsistent");
        return m;
    } catch (const json::exception &e) {
        throw validation_error(std::string("malformed model file: ") + e.what());
    }
}

void save_model(const std::string &path, const Model &m)
{
    std::ofstream out(path);
    if (!out)
        throw io_error("cannot write " + path);
    out << model_to_json(m) << '\n';
    if (!out)
        throw io_error("write failed: " + path);
}

Model load_model(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw io_error("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

void write_loso_csv(std::ostream &out, const LosoResult &r)
{
    out << "subject,n,correct,accuracy\n";
    for (const SubjectResult &s : r.per_subject)
        out << s.subject << ',' << s.n << ',' << s.correct << ','
            << (s.n ? static_cast<double>(s.correct) / static_cast<double>(s.n) : 0.0) << '\n';
}

void write_weights_csv(std::ostream &out, const std::vector<std::string> &registry, const std::vector<double> &weights,
                       const std::string &column)
{
    out << "feature," << column << '\n';
    for (std::size_t i = 0; i < registry.size() && i < weights.size(); ++i)
        out << registry[i] << ',' << weights[i] << '\n';
}

} // namespace pif::classify
