#include "fairpipe/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <ostream>

#include "fairpipe/errors.hpp"

namespace fairpipe {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
}

std::string file_fnv64_hex(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const auto got = static_cast<std::size_t>(in.gcount());
        for (std::size_t i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
        if (in.eof()) break;
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

struct GridRunner {
    const RunConfig& cfg;
    const fs::path* out_dir;  // null for in-memory runs
    std::ostream* log;
    std::vector<std::string> artifacts;

    void note(const std::string& message) const {
        if (log != nullptr) *log << message << "\n";
    }

    void artifact(const std::string& name, const std::string& text) {
        if (out_dir == nullptr) return;
        write_text(*out_dir / name, text);
        artifacts.push_back(name);
    }

    template <typename Fn>
    void artifact_via(const std::string& name, Fn&& writer) {
        if (out_dir == nullptr) return;
        writer((*out_dir / name).string());
        artifacts.push_back(name);
    }

    GridResult run() {
        GridResult result;
        const Lexicon lexicon = Lexicon::builtin();
        artifact("lexicon.json", lexicon.to_json_string());
        artifact("config_resolved.json", cfg.resolved_json());

        note("generating " + std::to_string(cfg.datagen.n_profiles) + " profiles");
        const ProfileSet profiles = generate_profiles(cfg.datagen, lexicon);
        artifact("dataset.jsonl", profiles_to_jsonl(profiles));
        artifact("datagen_config.json", generator_config_to_json(cfg.datagen));

        auto [train_set, val_set] =
            split(profiles, cfg.val_fraction, derive_seed(cfg.seed, "split"));
        const auto embedder = Embedder::create(cfg.embedder);
        const std::string model_label =
            to_string(cfg.embedder.kind) + "-" + std::to_string(cfg.embedder.dim);

        // Unbiased baseline.
        note("training unbiased baseline");
        TrainConfig unbiased_cfg = cfg.train;
        unbiased_cfg.target = TrainTarget::blind;
        ScoringModel unbiased =
            ScoringModel::init(embedder->dim(), cfg.embedder, unbiased_cfg.seed);
        const auto unbiased_hist = train(unbiased, train_set, val_set, *embedder, unbiased_cfg);
        result.unbiased = audit(unbiased, *embedder, val_set, cfg.audit.top_k, cfg.audit.bins,
                                cfg.audit.smoothing);
        artifact_via("checkpoint_unbiased.bin",
                     [&](const std::string& p) { save_checkpoint(unbiased, p); });
        artifact_via("history_unbiased.csv",
                     [&](const std::string& p) { save_history_csv(unbiased_hist, p); });
        artifact("audit_unbiased.json",
                 result.unbiased.to_json_string(model_label, "unbiased"));

        // Biased baseline, shared by both mitigation approaches.
        note("training biased baseline");
        TrainConfig biased_cfg = cfg.train;
        biased_cfg.target = TrainTarget::biased;
        ScoringModel biased = ScoringModel::init(embedder->dim(), cfg.embedder, biased_cfg.seed);
        const auto biased_hist = train(biased, train_set, val_set, *embedder, biased_cfg);
        result.biased = audit(biased, *embedder, val_set, cfg.audit.top_k, cfg.audit.bins,
                              cfg.audit.smoothing);
        artifact_via("checkpoint_biased.bin",
                     [&](const std::string& p) { save_checkpoint(biased, p); });
        artifact_via("history_biased.csv",
                     [&](const std::string& p) { save_history_csv(biased_hist, p); });
        artifact("audit_biased.json", result.biased.to_json_string(model_label, "biased"));

        // Approach 1: detect-mask-retrain.
        note("running approach 1 (token masking)");
        const MitigationResult mitigation = mitigate_via_explainability(
            train_set, val_set, lexicon, cfg.embedder, biased_cfg, cfg.attribution, &biased);
        result.approach1 = audit(mitigation.model, *embedder, mitigation.masked_val,
                                 cfg.audit.top_k, cfg.audit.bins, cfg.audit.smoothing);
        artifact_via("checkpoint_approach1.bin",
                     [&](const std::string& p) { save_checkpoint(mitigation.model, p); });
        artifact_via("history_approach1.csv",
                     [&](const std::string& p) { save_history_csv(mitigation.final_history, p); });
        artifact("mask_list.txt", mitigation.mask.to_text());
        artifact("group_sets.json", mitigation.report.sets.to_json_string());
        artifact_via("attributions.csv", [&](const std::string& p) {
            save_resume_attributions_csv(mitigation.report.resumes, p);
        });
        artifact("audit_approach1.json",
                 result.approach1.to_json_string(model_label, "approach1"));

        for (int g = 0; g < 2; ++g) {
            const auto pool = lexicon.tokens_with_tag(TokenTag::gender_proxy, g);
            result.proxy_tokens_total += pool.size();
            for (const auto& token : pool) {
                for (int s = 0; s < kNumSectors; ++s) {
                    if (mitigation.report.sets.group_contains(g, s, token)) {
                        ++result.proxy_tokens_recovered;
                        break;
                    }
                }
            }
        }

        // Approach 2: adversarial removal.
        note("running approach 2 (adversarial training)");
        AdversarialConfig adv_cfg;
        adv_cfg.train = biased_cfg;
        adv_cfg.lambda = cfg.adv_lambda;
        adv_cfg.mu = cfg.adv_mu;
        ScoringModel approach2 =
            ScoringModel::init(embedder->dim(), cfg.embedder, adv_cfg.train.seed);
        AdversaryHead adversary = AdversaryHead::init(derive_seed(cfg.seed, "adversary"));
        const auto adv_hist =
            adversarial_train(approach2, adversary, train_set, val_set, *embedder, adv_cfg);
        result.approach2 = audit(approach2, *embedder, val_set, cfg.audit.top_k, cfg.audit.bins,
                                 cfg.audit.smoothing);
        artifact_via("checkpoint_approach2.bin",
                     [&](const std::string& p) { save_checkpoint(approach2, p); });
        artifact_via("checkpoint_adversary.bin",
                     [&](const std::string& p) { save_adversary(adversary, p); });
        artifact_via("history_approach2.csv",
                     [&](const std::string& p) { save_adv_history_csv(adv_hist, p); });
        artifact("audit_approach2.json",
                 result.approach2.to_json_string(model_label, "approach2"));

        // Leakage probes on the two checkpoints.
        note("probing latent gender leakage");
        ProbeConfig probe_cfg;
        probe_cfg.seed = derive_seed(cfg.seed, "probe");
        result.probe_biased = probe_gender(biased, *embedder, val_set, probe_cfg);
        result.probe_approach2 = probe_gender(approach2, *embedder, val_set, probe_cfg);
        {
            json j;
            j["biased"] = result.probe_biased;
            j["approach2"] = result.probe_approach2;
            artifact("probe.json", j.dump(2) + "\n");
        }

        // Merged comparison table.
        std::string table = FairnessReport::csv_header();
        table += result.unbiased.csv_row(model_label, "unbiased");
        table += result.biased.csv_row(model_label, "biased");
        table += result.approach1.csv_row(model_label, "approach1");
        table += result.approach2.csv_row(model_label, "approach2");
        artifact("report.csv", table);

        if (out_dir != nullptr) {
            json manifest;
            json files = json::array();
            std::sort(artifacts.begin(), artifacts.end());
            for (const auto& name : artifacts) {
                const fs::path p = *out_dir / name;
                files.push_back({{"path", name},
                                 {"bytes", fs::file_size(p)},
                                 {"fnv64", file_fnv64_hex(p)}});
            }
            manifest["files"] = files;
            manifest["seed"] = cfg.seed;
            write_text(*out_dir / "manifest.json", manifest.dump(2) + "\n");
        }
        return result;
    }
};

}  // namespace

GridResult run_grid(const RunConfig& config, std::ostream* log) {
    GridRunner runner{config, nullptr, log, {}};
    return runner.run();
}

GridResult run_repro(const RunConfig& config, const std::string& out_dir, std::ostream* log) {
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    GridRunner runner{config, &dir, log, {}};
    return runner.run();
}

void merge_reports_csv(const std::vector<std::string>& report_paths,
                       const std::string& out_path) {
    std::string table = FairnessReport::csv_header();
    for (const auto& path : report_paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open report '" + path + "'");
        std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
        std::string model_label;
        std::string method_label;
        const FairnessReport r =
            FairnessReport::from_json_string(text, &model_label, &method_label);
        table += r.csv_row(model_label, method_label);
    }
    write_text(out_path, table);
}

}  // namespace fairpipe
