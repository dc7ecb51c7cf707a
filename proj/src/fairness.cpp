#include "fairpipe/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <unordered_map>
#include <unordered_set>

#include "fairpipe/errors.hpp"

namespace fairpipe {

namespace {

using nlohmann::json;

std::unordered_map<std::int64_t, int> gender_by_id(std::span<const std::int64_t> ids,
                                                   std::span<const int> genders) {
    if (ids.size() != genders.size()) throw DataError("id/gender length mismatch");
    std::unordered_map<std::int64_t, int> map;
    map.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) map[ids[i]] = genders[i];
    return map;
}

}  // namespace

double score_kl(std::span<const double> scores, std::span<const int> genders, int bins,
                double smoothing) {
    if (scores.size() != genders.size()) throw DataError("score/gender length mismatch");
    if (bins < 2) throw ConfigError("score_kl: bins must be at least 2");
    if (smoothing <= 0.0) throw ConfigError("score_kl: smoothing must be positive");
    std::vector<double> hist_m(static_cast<std::size_t>(bins), 0.0);
    std::vector<double> hist_f(static_cast<std::size_t>(bins), 0.0);
    std::size_t n_m = 0;
    std::size_t n_f = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double s = scores[i];
        if (!(s >= 0.0 && s <= 1.0)) {
            throw DataError("score_kl: score " + std::to_string(s) + " outside [0, 1]");
        }
        auto bin = static_cast<std::size_t>(s * bins);
        if (bin >= static_cast<std::size_t>(bins)) bin = static_cast<std::size_t>(bins) - 1;
        if (genders[i] == 0) {
            hist_m[bin] += 1.0;
            ++n_m;
        } else if (genders[i] == 1) {
            hist_f[bin] += 1.0;
            ++n_f;
        } else {
            throw DataError("score_kl: gender labels must be 0/1");
        }
    }
    if (n_m == 0 || n_f == 0) throw DataError("score_kl: both genders must be present");
    const double denom_m = static_cast<double>(n_m) + bins * smoothing;
    const double denom_f = static_cast<double>(n_f) + bins * smoothing;
    double kl = 0.0;
    for (int b = 0; b < bins; ++b) {
        const double p = (hist_m[static_cast<std::size_t>(b)] + smoothing) / denom_m;
        const double q = (hist_f[static_cast<std::size_t>(b)] + smoothing) / denom_f;
        kl += p * std::log(p / q);
    }
    return kl;
}

std::vector<std::int64_t> shortlist(std::span<const std::int64_t> ids,
                                    std::span<const double> scores, std::size_t k) {
    if (ids.size() != scores.size()) throw DataError("id/score length mismatch");
    if (k == 0) throw ConfigError("shortlist: k must be positive");
    if (k > ids.size()) {
        throw ConfigError("shortlist: k " + std::to_string(k) + " exceeds population " +
                          std::to_string(ids.size()));
    }
    std::vector<std::size_t> order(ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ids[a] < ids[b];
    });
    std::vector<std::int64_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = ids[order[i]];
    std::sort(out.begin(), out.end());
    return out;
}

Proportions proportions_and_ratio(const std::vector<std::int64_t>& shortlist_ids,
                                  std::span<const std::int64_t> ids,
                                  std::span<const int> genders) {
    if (shortlist_ids.empty()) throw DataError("proportions: shortlist is empty");
    const auto lookup = gender_by_id(ids, genders);
    std::size_t count_m = 0;
    for (const auto id : shortlist_ids) {
        auto it = lookup.find(id);
        if (it == lookup.end()) {
            throw DataError("proportions: shortlist id " + std::to_string(id) +
                            " not in population");
        }
        if (it->second == 0) ++count_m;
    }
    Proportions p;
    const auto n = static_cast<double>(shortlist_ids.size());
    p.prop_m = 100.0 * static_cast<double>(count_m) / n;
    p.prop_f = 100.0 - p.prop_m;
    const double lo = std::min(p.prop_m, p.prop_f);
    const double hi = std::max(p.prop_m, p.prop_f);
    p.ratio = hi > 0.0 ? lo / hi : 0.0;
    return p;
}

GroupRecall group_recall(const std::vector<std::int64_t>& pred_ids,
                         const std::vector<std::int64_t>& truth_ids,
                         std::span<const std::int64_t> ids, std::span<const int> genders) {
    const auto lookup = gender_by_id(ids, genders);
    const std::unordered_set<std::int64_t> pred(pred_ids.begin(), pred_ids.end());
    std::size_t truth_by_gender[2] = {0, 0};
    std::size_t hit_by_gender[2] = {0, 0};
    for (const auto id : truth_ids) {
        auto it = lookup.find(id);
        if (it == lookup.end()) {
            throw DataError("recall: truth id " + std::to_string(id) + " not in population");
        }
        const int g = it->second;
        truth_by_gender[g] += 1;
        if (pred.count(id) != 0) hit_by_gender[g] += 1;
    }
    if (truth_by_gender[0] == 0 || truth_by_gender[1] == 0) {
        throw DataError("recall: a gender is absent from the ground-truth shortlist");
    }
    GroupRecall r;
    r.recall_m = 100.0 * static_cast<double>(hit_by_gender[0]) /
                 static_cast<double>(truth_by_gender[0]);
    r.recall_f = 100.0 * static_cast<double>(hit_by_gender[1]) /
                 static_cast<double>(truth_by_gender[1]);
    r.recall_overall = 100.0 * static_cast<double>(hit_by_gender[0] + hit_by_gender[1]) /
                       static_cast<double>(truth_by_gender[0] + truth_by_gender[1]);
    return r;
}

FairnessReport audit_scores(std::span<const std::int64_t> ids, std::span<const double> scores,
                            std::span<const int> genders, std::span<const double> blind_scores,
                            std::size_t k, int bins, double smoothing) {
    FairnessReport report;
    report.top_k = k;
    report.d_kl = score_kl(scores, genders, bins, smoothing);
    const auto pred = shortlist(ids, scores, k);
    const auto truth = shortlist(ids, blind_scores, k);
    const Proportions p = proportions_and_ratio(pred, ids, genders);
    report.prop_m = p.prop_m;
    report.prop_f = p.prop_f;
    report.ratio = p.ratio;
    const GroupRecall r = group_recall(pred, truth, ids, genders);
    report.recall_m = r.recall_m;
    report.recall_f = r.recall_f;
    report.recall_overall = r.recall_overall;
    report.four_fifths_pass = report.ratio >= 0.8;
    report.eop_gap = std::abs(report.recall_m - report.recall_f);
    return report;
}

FairnessReport audit(const ScoringModel& model, const Embedder& embedder,
                     const ProfileSet& validation, std::size_t k, int bins, double smoothing) {
    const FeatureSet f = compute_features(validation, embedder);
    const std::vector<double> scores = infer_scores(model, f);
    return audit_scores(f.ids, scores, f.gender, f.blind, k, bins, smoothing);
}

std::string FairnessReport::to_json_string(const std::string& model_label,
                                           const std::string& method_label) const {
    json j;
    j["model"] = model_label;
    j["method"] = method_label;
    j["d_kl"] = d_kl;
    j["top_k"] = top_k;
    j["prop_m"] = prop_m;
    j["prop_f"] = prop_f;
    j["ratio"] = ratio;
    j["recall_m"] = recall_m;
    j["recall_f"] = recall_f;
    j["recall_overall"] = recall_overall;
    j["four_fifths_pass"] = four_fifths_pass;
    j["eop_gap"] = eop_gap;
    return j.dump(2) + "\n";
}

FairnessReport FairnessReport::from_json_string(const std::string& text,
                                                std::string* model_label,
                                                std::string* method_label) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError(std::string("fairness report parse error: ") + e.what());
    }
    FairnessReport r;
    if (model_label != nullptr) *model_label = j.at("model").get<std::string>();
    if (method_label != nullptr) *method_label = j.at("method").get<std::string>();
    r.d_kl = j.at("d_kl").get<double>();
    r.top_k = j.at("top_k").get<std::size_t>();
    r.prop_m = j.at("prop_m").get<double>();
    r.prop_f = j.at("prop_f").get<double>();
    r.ratio = j.at("ratio").get<double>();
    r.recall_m = j.at("recall_m").get<double>();
    r.recall_f = j.at("recall_f").get<double>();
    r.recall_overall = j.at("recall_overall").get<double>();
    r.four_fifths_pass = j.at("four_fifths_pass").get<bool>();
    r.eop_gap = j.at("eop_gap").get<double>();
    return r;
}

std::string FairnessReport::csv_header() {
    return "model,method,d_kl,prop_m,prop_f,ratio,recall_m,recall_f,recall_overall\n";
}

std::string FairnessReport::csv_row(const std::string& model_label,
                                    const std::string& method_label) const {
    char buf[320];
    std::snprintf(buf, sizeof(buf), "%s,%s,%.4f,%.2f,%.2f,%.3f,%.2f,%.2f,%.2f\n",
                  model_label.c_str(), method_label.c_str(), d_kl, prop_m, prop_f, ratio,
                  recall_m, recall_f, recall_overall);
    return buf;
}

}  // namespace fairpipe
