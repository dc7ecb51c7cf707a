#pragma once

#include <cstdint>
#include <string>

#include "fairpipe/attribution.hpp"
#include "fairpipe/datagen.hpp"
#include "fairpipe/embed.hpp"
#include "fairpipe/projection.hpp"
#include "fairpipe/scoring.hpp"

namespace fairpipe {

struct AuditConfig {
    std::size_t top_k = 500;
    int bins = 50;
    double smoothing = 1e-6;
};

// One JSON document driving the whole pipeline. Unknown keys are rejected;
// unset per-stage seeds are derived from the global seed by stage name, so
// stages can be rerun independently yet reproducibly. Scalar fields can be
// overridden with FAIRPIPE_<SECTION>_<FIELD> environment variables.
struct RunConfig {
    std::uint64_t seed = 7;
    std::string out = "runs/out";
    double val_fraction = 0.2;
    GeneratorConfig datagen;
    EmbedderConfig embedder;
    TrainConfig train;
    double adv_lambda = 0.1;
    double adv_mu = 1.0;
    AttributionConfig attribution;
    AuditConfig audit;
    TsneConfig projection;
    std::size_t projection_sample = 1000;

    static RunConfig defaults();
    static RunConfig from_json_text(const std::string& text, bool apply_env = true);
    static RunConfig load(const std::string& path, bool apply_env = true);

    // Fully resolved document (defaults and derived seeds expanded).
    std::string resolved_json() const;

    void validate() const;
};

}  // namespace fairpipe
