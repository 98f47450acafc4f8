#pragma once

#include <string>

#include "ganlink/models.hpp"
#include "ganlink/training.hpp"

namespace ganlink {

// A fully resolved configuration for one model kind. Only the section that
// matches `kind` is meaningful.
struct ParsedConfig {
    ModelKind kind = ModelKind::cgan;
    GeneratorConfig gen;
    DiscriminatorConfig disc;
    AEConfig ae;
    BiDNNConfig bidnn;
    double bn_momentum = 0.9;
    TrainConfig train;
};

ParsedConfig default_config(ModelKind kind);

// Parses a flat JSON object. Model keys depend on the kind; training keys
// (epochs, batch_size, gen_updates_per_disc, learning_rate, beta1, beta2,
// epsilon) are accepted only when allow_train_keys is set. Unknown keys are
// rejected.
ParsedConfig parse_config(ModelKind kind, const std::string& json_text, bool allow_train_keys);

// Canonical flat JSON of the model section (sorted keys); embedded in
// checkpoints so a checkpoint is self-describing.
std::string canonical_model_config(const ParsedConfig& cfg);

} // namespace ganlink
