#pragma once

#include <iosfwd>
#include <string>

#include "fairpipe/adversarial.hpp"
#include "fairpipe/fairness.hpp"
#include "fairpipe/runconfig.hpp"

namespace fairpipe {

// Audits and leakage probes for one full grid run:
// {unbiased, biased, approach-1, approach-2} on a shared dataset, the
// biased baseline shared by both mitigation approaches.
struct GridResult {
    FairnessReport unbiased;
    FairnessReport biased;
    FairnessReport approach1;
    FairnessReport approach2;
    double probe_biased = 0.0;
    double probe_approach2 = 0.0;
    std::size_t proxy_tokens_total = 0;
    std::size_t proxy_tokens_recovered = 0;
};

// In-memory grid run (no files written). `log` may be null.
GridResult run_grid(const RunConfig& config, std::ostream* log);

// Full repro run: writes dataset, checkpoints, histories, audit reports,
// the merged comparison table, and a manifest under out_dir. Everything is
// reproducible byte for byte from (config, seed).
GridResult run_repro(const RunConfig& config, const std::string& out_dir, std::ostream* log);

// Merges audit-report JSON files into one comparison CSV.
void merge_reports_csv(const std::vector<std::string>& report_paths, const std::string& out_path);

}  // namespace fairpipe
