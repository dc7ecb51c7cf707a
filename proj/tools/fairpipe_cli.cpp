#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "fairpipe/adversarial.hpp"
#include "fairpipe/attribution.hpp"
#include "fairpipe/errors.hpp"
#include "fairpipe/fairness.hpp"
#include "fairpipe/pipeline.hpp"
#include "fairpipe/projection.hpp"
#include "fairpipe/runconfig.hpp"

namespace fs = std::filesystem;
using namespace fairpipe;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool quick = false;
};

void add_common(CLI::App* cmd, CommonArgs* args) {
    cmd->add_option("--config", args->config_path, "Run configuration JSON");
    cmd->add_option("--out", args->out_dir, "Output directory");
    cmd->add_option("--seed", args->seed, "Global seed (re-derives all stage seeds)")
        ->each([args](const std::string&) { args->seed_set = true; });
    cmd->add_flag("--quick", args->quick, "Desk-scale run: n = 4000 profiles, top-k = 100");
}

RunConfig resolve_config(const CommonArgs& args) {
    RunConfig cfg = args.config_path.empty() ? RunConfig::defaults()
                                             : RunConfig::load(args.config_path);
    if (args.seed_set) {
        cfg.seed = args.seed;
        cfg.datagen.seed = derive_seed(cfg.seed, "datagen");
        cfg.embedder.seed = derive_seed(cfg.seed, "embedder");
        cfg.train.seed = derive_seed(cfg.seed, "train");
        cfg.projection.seed = derive_seed(cfg.seed, "projection");
    }
    if (args.quick) {
        cfg.datagen.n_profiles = 4000;
        cfg.audit.top_k = 100;
    }
    if (!args.out_dir.empty()) cfg.out = args.out_dir;
    cfg.validate();
    return cfg;
}

fs::path prepare_out(const RunConfig& cfg) {
    const fs::path dir(cfg.out);
    fs::create_directories(dir);
    std::ofstream resolved(dir / "config_resolved.json", std::ios::binary);
    resolved << cfg.resolved_json();
    return dir;
}

Lexicon load_lexicon(const std::string& path) {
    return path.empty() ? Lexicon::builtin() : Lexicon::load(path);
}

std::pair<ProfileSet, ProfileSet> load_and_split(const RunConfig& cfg,
                                                 const std::string& data_path) {
    const ProfileSet profiles = load_profiles_jsonl(data_path);
    return split(profiles, cfg.val_fraction, derive_seed(cfg.seed, "split"));
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int cmd_gen(const CommonArgs& common, const std::string& lexicon_path) {
    const RunConfig cfg = resolve_config(common);
    const fs::path dir = prepare_out(cfg);
    const Lexicon lexicon = load_lexicon(lexicon_path);
    const ProfileSet profiles = generate_profiles(cfg.datagen, lexicon);
    save_profiles_jsonl(profiles, (dir / "dataset.jsonl").string());
    std::ofstream sidecar(dir / "datagen_config.json", std::ios::binary);
    sidecar << generator_config_to_json(cfg.datagen);
    lexicon.save((dir / "lexicon.json").string());
    std::cout << "wrote " << profiles.size() << " profiles to " << (dir / "dataset.jsonl")
              << "\n";
    return 0;
}

int cmd_train(const CommonArgs& common, const std::string& data_path) {
    const RunConfig cfg = resolve_config(common);
    const fs::path dir = prepare_out(cfg);
    auto [train_set, val_set] = load_and_split(cfg, data_path);
    const auto embedder = Embedder::create(cfg.embedder);
    ScoringModel model = ScoringModel::init(embedder->dim(), cfg.embedder, cfg.train.seed);
    const auto history = train(model, train_set, val_set, *embedder, cfg.train);
    save_checkpoint(model, (dir / "checkpoint.bin").string());
    save_history_csv(history, (dir / "history.csv").string());
    std::cout << "trained on " << train_set.size() << " profiles (target "
              << to_string(cfg.train.target) << "); final val RMSE "
              << history.back().val_rmse << "\n";
    return 0;
}

int cmd_audit(const CommonArgs& common, const std::string& checkpoint_path,
              const std::string& data_path, const std::string& mask_path,
              const std::string& lexicon_path, std::string method_label) {
    const RunConfig cfg = resolve_config(common);
    const fs::path dir = prepare_out(cfg);
    const ScoringModel model = load_checkpoint(checkpoint_path);
    auto [train_set, val_set] = load_and_split(cfg, data_path);
    if (!mask_path.empty()) {
        const MaskList mask = MaskList::from_text(read_file(mask_path));
        val_set = apply_mask(val_set, mask, load_lexicon(lexicon_path));
        if (method_label == "model") method_label = "masked";
    }
    const auto embedder = Embedder::create(model.embedder);
    const FairnessReport report = audit(model, *embedder, val_set, cfg.audit.top_k,
                                        cfg.audit.bins, cfg.audit.smoothing);
    const std::string model_label =
        to_string(model.embedder.kind) + "-" + std::to_string(model.embedder.dim);
    std::ofstream out(dir / "audit.json", std::ios::binary);
    out << report.to_json_string(model_label, method_label);
    std::cout << FairnessReport::csv_header()
              << report.csv_row(model_label, method_label);
    return 0;
}

int cmd_explain(const CommonArgs& common, const std::string& checkpoint_path,
                const std::string& data_path, const std::string& lexicon_path) {
    const RunConfig cfg = resolve_config(common);
    const fs::path dir = prepare_out(cfg);
    const ScoringModel model = load_checkpoint(checkpoint_path);
    auto [train_set, val_set] = load_and_split(cfg, data_path);
    const Lexicon lexicon = load_lexicon(lexicon_path);
    const auto embedder = Embedder::create(model.embedder);
    std::vector<ResumeAttribution> per_resume;
    const GroupTokenSets sets = mine_group_tokens(
        model, *embedder, val_set, cfg.attribution.per_resume_k, cfg.attribution.per_group_k,
        lexicon, cfg.attribution.ig_steps, &per_resume);
    const MaskList mask = build_mask_list(sets, lexicon);
    std::ofstream(dir / "group_sets.json", std::ios::binary) << sets.to_json_string();
    save_resume_attributions_csv(per_resume, (dir / "attributions.csv").string());
    std::ofstream(dir / "mask_list.txt", std::ios::binary) << mask.to_text();
    std::cout << "mined token sets over " << val_set.size() << " validation resumes; mask list "
              << mask.tokens.size() << " tokens\n";
    return 0;
}

int cmd_mask_retrain(const CommonArgs& common, const std::string& data_path,
                     const std::string& lexicon_path) {
    RunConfig cfg = resolve_config(common);
    const fs::path dir = prepare_out(cfg);
    auto [train_set, val_set] = load_and_split(cfg, data_path);
    const Lexicon lexicon = load_lexicon(lexicon_path);
    TrainConfig train_cfg = cfg.train;
    train_cfg.target = TrainTarget::biased;
    const MitigationResult result = mitigate_via_explainability(
        train_set, val_set, lexicon, cfg.embedder, train_cfg, cfg.attribution);
    save_checkpoint(result.model, (dir / "checkpoint.bin").string());
    save_history_csv(result.final_history, (dir / "history.csv").string());
    std::ofstream(dir / "mask_list.txt", std::ios::binary) << result.mask.to_text();
    std::ofstream(dir / "group_sets.json", std::ios::binary)
        << result.report.sets.to_json_string();
    save_resume_attributions_csv(result.report.resumes, (dir / "attributions.csv").string());
    const auto embedder = Embedder::create(cfg.embedder);
    const FairnessReport report = audit(result.model, *embedder, result.masked_val,
                                        cfg.audit.top_k, cfg.audit.bins, cfg.audit.smoothing);
    const std::string model_label =
        to_string(cfg.embedder.kind) + "-" + std::to_string(cfg.embedder.dim);
    std::ofstream(dir / "audit.json", std::ios::binary)
        << report.to_json_string(model_label, "approach1");
    std::cout << FairnessReport::csv_header() << report.csv_row(model_label, "approach1");
    return 0;
}

int cmd_adv_train(const CommonArgs& common, const std::string& data_path) {
    const RunConfig cfg = resolve_config(common);
    const fs::path dir = prepare_out(cfg);
    auto [train_set, val_set] = load_and_split(cfg, data_path);
    const auto embedder = Embedder::create(cfg.embedder);
    AdversarialConfig adv_cfg;
    adv_cfg.train = cfg.train;
    adv_cfg.train.target = TrainTarget::biased;
    adv_cfg.lambda = cfg.adv_lambda;
    adv_cfg.mu = cfg.adv_mu;
    ScoringModel model = ScoringModel::init(embedder->dim(), cfg.embedder, adv_cfg.train.seed);
    AdversaryHead adversary = AdversaryHead::init(derive_seed(cfg.seed, "adversary"));
    const auto history =
        adversarial_train(model, adversary, train_set, val_set, *embedder, adv_cfg);
    save_checkpoint(model, (dir / "checkpoint.bin").string());
    save_adversary(adversary, (dir / "adversary.bin").string());
    save_adv_history_csv(history, (dir / "history.csv").string());
    std::cout << "adversarial training done; final adversary val accuracy "
              << history.back().adv_val_acc << "\n";
    return 0;
}

int cmd_probe(const CommonArgs& common, const std::string& checkpoint_path,
              const std::string& data_path) {
    const RunConfig cfg = resolve_config(common);
    const fs::path dir = prepare_out(cfg);
    const ScoringModel model = load_checkpoint(checkpoint_path);
    auto [train_set, val_set] = load_and_split(cfg, data_path);
    const auto embedder = Embedder::create(model.embedder);
    ProbeConfig probe_cfg;
    probe_cfg.seed = derive_seed(cfg.seed, "probe");
    const double accuracy = probe_gender(model, *embedder, val_set, probe_cfg);
    nlohmann::json j;
    j["held_out_accuracy"] = accuracy;
    std::ofstream(dir / "probe.json", std::ios::binary) << j.dump(2) << "\n";
    std::cout << "held-out gender probe accuracy " << accuracy << "\n";
    return 0;
}

int cmd_project(const CommonArgs& common, const std::string& checkpoint_path,
                const std::string& data_path) {
    const RunConfig cfg = resolve_config(common);
    const fs::path dir = prepare_out(cfg);
    const ScoringModel model = load_checkpoint(checkpoint_path);
    auto [train_set, val_set] = load_and_split(cfg, data_path);
    const auto embedder = Embedder::create(model.embedder);
    const ProfileSet sample = stratified_sample(val_set, cfg.projection_sample,
                                                derive_seed(cfg.seed, "projection-sample"));
    const ProjectionResult projection = project_latents(model, *embedder, sample,
                                                        cfg.projection);
    save_projection_csv(projection.rows, (dir / "projection.csv").string());
    std::ofstream(dir / "projection_meta.json", std::ios::binary)
        << tsne_metadata_json(cfg.projection, projection.tsne);
    std::cout << "projected " << projection.rows.size() << " latents; final KL "
              << projection.tsne.final_objective << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& reports, const std::string& out_file) {
    merge_reports_csv(reports, out_file);
    std::cout << read_file(out_file);
    return 0;
}

int cmd_repro(const CommonArgs& common) {
    const RunConfig cfg = resolve_config(common);
    run_repro(cfg, cfg.out, &std::cout);
    std::cout << read_file((fs::path(cfg.out) / "report.csv").string());
    return 0;
}

bool is_input_error(const Error& e) {
    return dynamic_cast<const ConfigError*>(&e) != nullptr ||
           dynamic_cast<const IoError*>(&e) != nullptr ||
           dynamic_cast<const DataError*>(&e) != nullptr ||
           dynamic_cast<const SplitError*>(&e) != nullptr ||
           dynamic_cast<const LexiconError*>(&e) != nullptr ||
           dynamic_cast<const LookupError*>(&e) != nullptr ||
           dynamic_cast<const IndexError*>(&e) != nullptr;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fairpipe: bias analysis and mitigation for a multimodal resume scorer"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string data_path;
    std::string checkpoint_path;
    std::string mask_path;
    std::string lexicon_path;
    std::string method_label = "model";
    std::string report_out = "report.csv";
    std::vector<std::string> report_inputs;

    auto* gen = app.add_subcommand("gen", "Generate a synthetic profile dataset");
    add_common(gen, &common);
    gen->add_option("--lexicon", lexicon_path, "Lexicon JSON (default: builtin)");

    auto* train_cmd = app.add_subcommand("train", "Train the scoring model");
    add_common(train_cmd, &common);
    train_cmd->add_option("--data", data_path, "Profile JSONL file")->required();

    auto* audit_cmd = app.add_subcommand("audit", "Fairness audit of a checkpoint");
    add_common(audit_cmd, &common);
    audit_cmd->add_option("--data", data_path, "Profile JSONL file")->required();
    audit_cmd->add_option("--checkpoint", checkpoint_path, "Scoring checkpoint")->required();
    audit_cmd->add_option("--mask", mask_path, "Mask list applied to the validation bios");
    audit_cmd->add_option("--lexicon", lexicon_path, "Lexicon JSON (default: builtin)");
    audit_cmd->add_option("--method", method_label, "Method label for the report row");

    auto* explain_cmd = app.add_subcommand("explain", "Integrated-gradients token mining");
    add_common(explain_cmd, &common);
    explain_cmd->add_option("--data", data_path, "Profile JSONL file")->required();
    explain_cmd->add_option("--checkpoint", checkpoint_path, "Scoring checkpoint")->required();
    explain_cmd->add_option("--lexicon", lexicon_path, "Lexicon JSON (default: builtin)");

    auto* mask_cmd = app.add_subcommand("mask-retrain", "Detect-mask-retrain mitigation");
    add_common(mask_cmd, &common);
    mask_cmd->add_option("--data", data_path, "Profile JSONL file")->required();
    mask_cmd->add_option("--lexicon", lexicon_path, "Lexicon JSON (default: builtin)");

    auto* adv_cmd = app.add_subcommand("adv-train", "Adversarial-removal mitigation");
    add_common(adv_cmd, &common);
    adv_cmd->add_option("--data", data_path, "Profile JSONL file")->required();

    auto* probe_cmd = app.add_subcommand("probe", "Latent gender-leakage probe");
    add_common(probe_cmd, &common);
    probe_cmd->add_option("--data", data_path, "Profile JSONL file")->required();
    probe_cmd->add_option("--checkpoint", checkpoint_path, "Scoring checkpoint")->required();

    auto* project_cmd = app.add_subcommand("project", "t-SNE projection of the latent space");
    add_common(project_cmd, &common);
    project_cmd->add_option("--data", data_path, "Profile JSONL file")->required();
    project_cmd->add_option("--checkpoint", checkpoint_path, "Scoring checkpoint")->required();

    auto* report_cmd = app.add_subcommand("report", "Merge audit reports into one table");
    report_cmd->add_option("reports", report_inputs, "Audit JSON files")->required();
    report_cmd->add_option("--out", report_out, "Output CSV path");

    auto* repro_cmd = app.add_subcommand("repro", "Run the full experiment grid");
    add_common(repro_cmd, &common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmd_gen(common, lexicon_path);
        if (train_cmd->parsed()) return cmd_train(common, data_path);
        if (audit_cmd->parsed()) {
            return cmd_audit(common, checkpoint_path, data_path, mask_path, lexicon_path,
                             method_label);
        }
        if (explain_cmd->parsed()) {
            return cmd_explain(common, checkpoint_path, data_path, lexicon_path);
        }
        if (mask_cmd->parsed()) return cmd_mask_retrain(common, data_path, lexicon_path);
        if (adv_cmd->parsed()) return cmd_adv_train(common, data_path);
        if (probe_cmd->parsed()) return cmd_probe(common, checkpoint_path, data_path);
        if (project_cmd->parsed()) return cmd_project(common, checkpoint_path, data_path);
        if (report_cmd->parsed()) return cmd_report(report_inputs, report_out);
        if (repro_cmd->parsed()) return cmd_repro(common);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return is_input_error(e) ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
