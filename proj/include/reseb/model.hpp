#pragma once

#include <cstdint>
#include <string>

#include "reseb/checkpoint.hpp"
#include "reseb/layers.hpp"
#include "reseb/tape.hpp"

namespace reseb {

enum class Architecture {
    rese_bilstm,
    lstm,
    bilstm,
    gru,
    rnn,
    cnn,
    m1_e_bilstm,  // residual additions removed
    m2_a_bilstm,  // feed-forward block removed
    m4_rese_lstm, // bidirectionality removed, encoder kept
};

std::string to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);

struct ModelSpec {
    Architecture arch = Architecture::rese_bilstm;
    std::int64_t months = 14;     // T
    std::int64_t features = 17;   // F
    std::int64_t hidden = 64;     // H per direction
    std::int64_t heads = 4;       // h
    std::int64_t d_k = 16;
    std::int64_t d_head = 64;
    std::int64_t ffn_inner = 256;
    std::int64_t conv_kernel = 3;
    std::int64_t conv_channels = 64;
    double dropout = 0.1;
    std::uint64_t seed = 1;
};

struct Model {
    ModelSpec spec;
    ParameterSet params;
};

// Deterministic per (spec, seed): equal seeds give byte-identical parameters.
Model build(const ModelSpec& spec);

// Graph construction on an existing tape. x: B x T x F. Returns the
// pre-sigmoid logits node of shape [B]. Dropout is applied only when
// training and spec.dropout > 0.
NodeId forward_logits(Tape& tape, const Model& model, NodeId x, bool training = false, Rng* dropout_rng = nullptr);

// Evaluation-mode probabilities for a batch, each strictly inside (0,1).
NumArray forward(const Model& model, const NumArray& batch);

// M1..M4 of the ablation study. base must be rese_bilstm.
ModelSpec ablation_variant(const ModelSpec& base, const std::string& which);

// Checkpoint (RESEB1 container) plus a JSON sidecar holding the ModelSpec.
void save_model(const std::string& path, const Model& model);
Model load_model(const std::string& path);

std::string spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const std::string& text);

} // namespace reseb
