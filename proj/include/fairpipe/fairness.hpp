#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fairpipe/scoring.hpp"

namespace fairpipe {

struct FairnessReport {
    double d_kl = 0.0;
    std::size_t top_k = 0;
    double prop_m = 0.0;  // percent
    double prop_f = 0.0;  // percent
    double ratio = 0.0;   // min proportion / max proportion
    double recall_m = 0.0;        // percent
    double recall_f = 0.0;        // percent
    double recall_overall = 0.0;  // percent
    bool four_fifths_pass = false;
    double eop_gap = 0.0;  // |recall_m - recall_f| in points

    std::string to_json_string(const std::string& model_label,
                               const std::string& method_label) const;
    static FairnessReport from_json_string(const std::string& text, std::string* model_label,
                                           std::string* method_label);
    std::string csv_row(const std::string& model_label, const std::string& method_label) const;
    static std::string csv_header();
};

// KL divergence (nats) between per-gender histograms of the scores over
// uniform bins on [0, 1], male distribution first, with additive smoothing.
double score_kl(std::span<const double> scores, std::span<const int> genders, int bins = 50,
                double smoothing = 1e-6);

// Top-k ids by descending score, ties broken by ascending id.
std::vector<std::int64_t> shortlist(std::span<const std::int64_t> ids,
                                    std::span<const double> scores, std::size_t k);

struct Proportions {
    double prop_m = 0.0;
    double prop_f = 0.0;
    double ratio = 0.0;
};

Proportions proportions_and_ratio(const std::vector<std::int64_t>& shortlist_ids,
                                  std::span<const std::int64_t> ids,
                                  std::span<const int> genders);

struct GroupRecall {
    double recall_m = 0.0;
    double recall_f = 0.0;
    double recall_overall = 0.0;
};

// Recall of the predicted shortlist against the ground-truth shortlist,
// per gender and pooled.
GroupRecall group_recall(const std::vector<std::int64_t>& pred_ids,
                         const std::vector<std::int64_t>& truth_ids,
                         std::span<const std::int64_t> ids, std::span<const int> genders);

// Full audit over precomputed scores: divergence, shortlist demographics,
// 4/5 rule, and recalls against the blind-score top-k.
FairnessReport audit_scores(std::span<const std::int64_t> ids, std::span<const double> scores,
                            std::span<const int> genders, std::span<const double> blind_scores,
                            std::size_t k, int bins = 50, double smoothing = 1e-6);

FairnessReport audit(const ScoringModel& model, const Embedder& embedder,
                     const ProfileSet& validation, std::size_t k = 500, int bins = 50,
                     double smoothing = 1e-6);

}  // namespace fairpipe
