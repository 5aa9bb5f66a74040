#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "features/features.hpp"

namespace pif::classify {

using features::Missing;

enum class Class { A, B };

const char *class_name(Class c);

struct Observation {
    std::vector<Missing> values; // registry order
    std::string subject;
    Class label = Class::A;
    std::string story;
};

struct Dataset {
    std::string construct;
    std::string class_a = "A", class_b = "B"; // label strings in the feature table
    std::vector<std::string> registry;
    std::vector<Observation> observations;

    // Subjects in order of first appearance.
    std::vector<std::string> subjects() const;
    // Throws Validation: < 2 subjects, a subject missing a class, arity mismatch.
    void validate() const;
    Dataset without_subject(const std::string &s) const;
    Dataset only_subject(const std::string &s) const;
};

// Rows whose label is class_a or class_b; other rows are ignored.
Dataset dataset_from_features(const std::vector<features::FeatureVector> &rows, const std::string &class_a,
                              const std::string &class_b, const std::string &construct = {});

// Average ranks 1..n, ties averaged. Values must be finite.
std::vector<double> average_ranks(const std::vector<double> &v);

// Per subject and feature: missing values replaced by the subject's median
// for that feature (0 if the subject has none), then ranked within the
// subject. Rows follow the dataset order.
Eigen::MatrixXd rank_normalize(const Dataset &d);

// PCA ------------------------------------------------------------------------

struct Pca {
    Eigen::VectorXd mean;       // d
    Eigen::MatrixXd basis;      // d x k, orthonormal columns
    Eigen::VectorXd variance;   // k, per-component variance (n - 1 denominator)
    double total_variance = 0.0;

    Eigen::MatrixXd project(const Eigen::MatrixXd &x) const; // rows are observations
};

constexpr double kRetainedVariance = 0.95;

// Minimal k whose components explain >= `retain` of the total variance.
// Uses the n x n Gram matrix when there are fewer rows than columns.
Pca fit_pca(const Eigen::MatrixXd &x, double retain = kRetainedVariance);

// LDA ------------------------------------------------------------------------

struct Lda {
    Eigen::VectorXd w; // unit length, points from class B toward class A
    double b = 0.0;    // boundary at the midpoint of the projected class means
    double separation = 0.0; // w . (mean_A - mean_B), > 0 unless degenerate
    double pooled_var = 0.0; // projected within-class variance
    bool ridge = false;

    double score(const Eigen::VectorXd &z) const { return w.dot(z) + b; }
    // P(class A) under equal-covariance Gaussians with equal priors.
    double posterior(double score) const;
};

// `label_a[i]` true for class A. Adds warnings for singular scatter and
// coincident means.
Lda fit_lda(const Eigen::MatrixXd &z, const std::vector<bool> &label_a, std::vector<std::string> *warnings = nullptr);

// Pipeline ---------------------------------------------------------------------

enum class RankMode {
    Joint,    // ranked with the same subject's other observations
    Quantile, // ranked against the training population
};

struct Model {
    std::string construct, class_a = "A", class_b = "B";
    std::vector<std::string> registry;
    std::vector<double> medians; // training-population median per feature
    // Sorted training values per feature, and the typical per-subject
    // observation count, for the quantile ranking mode.
    std::vector<std::vector<double>> reference;
    double rank_scale = 2.0;
    Pca pca;
    Lda lda;
    std::vector<std::string> subjects;
    std::size_t n_train = 0;
    std::vector<std::string> warnings;

    // Discriminant back-projected to feature space (unnormalized).
    Eigen::VectorXd feature_weights() const;
};

Model fit(const Dataset &d);

struct Prediction {
    Class label = Class::A;
    double score = 0.0;
    double posterior_a = 0.5;
};

Prediction decide(const Model &m, const Eigen::VectorXd &ranked_row);

// Ranks the subject's observations jointly and classifies each.
std::vector<Prediction> predict_subject(const Model &m, const std::vector<Observation> &obs);

// Classifies `x` given the same subject's other observations (Joint), or
// against the training population (Quantile; context unused).
Prediction predict(const Model &m, const std::vector<Missing> &x, const std::vector<std::vector<Missing>> &context,
                   RankMode mode = RankMode::Joint);

// Per-feature weights scaled so the largest magnitude is 1 (all-zero stays zero).
std::vector<double> normalize_weights(const Eigen::VectorXd &w);

struct SubjectResult {
    std::string subject;
    std::size_t n = 0, correct = 0;
    std::vector<Prediction> predictions;
};

struct LosoResult {
    double accuracy = 0.0;
    std::vector<SubjectResult> per_subject;
    std::vector<double> weights; // fold average, scaled to [-1, 1]
    std::vector<Model> folds;    // fold i leaves out per_subject[i].subject
};

LosoResult loso_cv(const Dataset &d, bool parallel = true);

// Model file -----------------------------------------------------------------

std::string model_to_json(const Model &m);
Model model_from_json(const std::string &text);
void save_model(const std::string &path, const Model &m);
Model load_model(const std::string &path);

// Per-subject results and the weight table.
void write_loso_csv(std::ostream &out, const LosoResult &r);
void write_weights_csv(std::ostream &out, const std::vector<std::string> &registry, const std::vector<double> &weights,
                       const std::string &column);

} // namespace pif::classify
