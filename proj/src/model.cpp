#include "reseb/model.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace reseb {

namespace {

bool has_encoder(Architecture a) {
    return a == Architecture::rese_bilstm || a == Architecture::m1_e_bilstm ||
           a == Architecture::m2_a_bilstm || a == Architecture::m4_rese_lstm;
}

bool is_bidirectional(Architecture a) {
    return a == Architecture::rese_bilstm || a == Architecture::bilstm ||
           a == Architecture::m1_e_bilstm || a == Architecture::m2_a_bilstm;
}

} // namespace

std::string to_string(Architecture a) {
    switch (a) {
        case Architecture::rese_bilstm: return "rese_bilstm";
        case Architecture::lstm: return "lstm";
        case Architecture::bilstm: return "bilstm";
        case Architecture::gru: return "gru";
        case Architecture::rnn: return "rnn";
        case Architecture::cnn: return "cnn";
        case Architecture::m1_e_bilstm: return "m1_e_bilstm";
        case Architecture::m2_a_bilstm: return "m2_a_bilstm";
        case Architecture::m4_rese_lstm: return "m4_rese_lstm";
    }
    throw ConfigError("unhandled architecture tag");
}

Architecture architecture_from_string(const std::string& s) {
    if (s == "rese_bilstm") return Architecture::rese_bilstm;
    if (s == "lstm") return Architecture::lstm;
    if (s == "bilstm") return Architecture::bilstm;
    if (s == "gru") return Architecture::gru;
    if (s == "rnn") return Architecture::rnn;
    if (s == "cnn") return Architecture::cnn;
    if (s == "m1_e_bilstm") return Architecture::m1_e_bilstm;
    if (s == "m2_a_bilstm") return Architecture::m2_a_bilstm;
    if (s == "m4_rese_lstm") return Architecture::m4_rese_lstm;
    throw ConfigError("unknown architecture '" + s + "'");
}

Model build(const ModelSpec& spec) {
    if (spec.months < 1 || spec.features < 1 || spec.hidden < 1) {
        throw ConfigError("model spec requires positive months/features/hidden");
    }
    if (has_encoder(spec.arch) && (spec.heads < 1 || spec.d_k < 1)) {
        throw ConfigError("encoder requires h >= 1 and d_k >= 1");
    }
    Model m;
    m.spec = spec;
    Rng rng(hash_mix(spec.seed, "init"));
    const auto F = spec.features;
    const auto H = spec.hidden;

    if (has_encoder(spec.arch)) {
        init_attention(m.params, "attn.", F, spec.heads, spec.d_k, rng);
        init_norm(m.params, "ln1.", F);
        if (spec.arch != Architecture::m2_a_bilstm) {
            init_ffn(m.params, "ffn.", F, spec.ffn_inner, rng);
            init_norm(m.params, "ln2.", F);
        }
    }

    std::int64_t head_in = 0;
    switch (spec.arch) {
        case Architecture::rese_bilstm:
        case Architecture::m1_e_bilstm:
        case Architecture::m2_a_bilstm:
        case Architecture::bilstm:
            init_lstm(m.params, "lstm_f.", F, H, rng);
            init_lstm(m.params, "lstm_b.", F, H, rng);
            head_in = spec.months * 2 * H;
            break;
        case Architecture::m4_rese_lstm:
        case Architecture::lstm:
            init_lstm(m.params, "lstm_f.", F, H, rng);
            head_in = spec.months * H;
            break;
        case Architecture::gru:
            init_gru(m.params, "gru.", F, H, rng);
            head_in = spec.months * H;
            break;
        case Architecture::rnn:
            init_rnn(m.params, "rnn.", F, H, rng);
            head_in = spec.months * H;
            break;
        case Architecture::cnn:
            if (spec.conv_kernel > spec.months) {
                throw ConfigError("conv kernel exceeds sequence length");
            }
            init_conv(m.params, "conv.", spec.conv_kernel, F, spec.conv_channels, rng);
            head_in = spec.conv_channels;
            break;
    }
    init_head(m.params, "head.", head_in, spec.d_head, rng);
    return m;
}

NodeId forward_logits(Tape& tape, const Model& model, NodeId x, bool training, Rng* dropout_rng) {
    const ModelSpec& spec = model.spec;
    const NumArray& xv = tape.value(x);
    if (xv.rank() != 3 || xv.extent(1) != spec.months || xv.extent(2) != spec.features) {
        throw DimensionError("forward: batch shape " + shape_str(xv.shape()) + " does not match spec [Bx" +
                             std::to_string(spec.months) + "x" + std::to_string(spec.features) + "]");
    }
    const std::int64_t B = xv.extent(0);
    const double drop = (training && dropout_rng) ? spec.dropout : 0.0;

    NodeId seq = x;
    if (has_encoder(spec.arch)) {
        auto attn = bind_attention(tape, model.params, "attn.", spec.heads);
        auto ln1 = bind_norm(tape, model.params, "ln1.");
        NodeId attn_out = multi_head_attention(tape, seq, attn);
        NodeId normed;
        if (spec.arch == Architecture::m1_e_bilstm) {
            normed = tape.layer_norm(attn_out, ln1.gamma, ln1.beta, kLayerNormEps);
        } else {
            normed = residual_norm(tape, attn_out, seq, ln1);
        }
        if (drop > 0.0) normed = tape.dropout(normed, drop, *dropout_rng);
        if (spec.arch == Architecture::m2_a_bilstm) {
            seq = normed;
        } else {
            auto ffn = bind_ffn(tape, model.params, "ffn.");
            auto ln2 = bind_norm(tape, model.params, "ln2.");
            NodeId ff_out = feed_forward(tape, normed, ffn);
            if (spec.arch == Architecture::m1_e_bilstm) {
                seq = tape.layer_norm(ff_out, ln2.gamma, ln2.beta, kLayerNormEps);
            } else {
                seq = residual_norm(tape, ff_out, normed, ln2);
            }
        }
    }

    NodeId flat = -1;
    if (is_bidirectional(spec.arch)) {
        auto fwd = bind_lstm(tape, model.params, "lstm_f.");
        auto bwd = bind_lstm(tape, model.params, "lstm_b.");
        NodeId out = bilstm(tape, seq, fwd, bwd); // B x T x 2H
        flat = tape.reshape(out, {B, spec.months * 2 * spec.hidden});
    } else if (spec.arch == Architecture::lstm || spec.arch == Architecture::m4_rese_lstm) {
        auto fwd = bind_lstm(tape, model.params, "lstm_f.");
        auto hs = lstm_sweep(tape, seq, fwd, false);
        flat = tape.concat_last(hs); // B x (T*H)
    } else if (spec.arch == Architecture::gru) {
        auto cell = bind_gru(tape, model.params, "gru.");
        NodeId h = tape.constant(NumArray::zeros({B, spec.hidden}));
        std::vector<NodeId> hs;
        for (std::int64_t tt = 0; tt < spec.months; ++tt) {
            h = gru_step(tape, tape.slice_time(seq, tt), h, cell);
            hs.push_back(h);
        }
        flat = tape.concat_last(hs);
    } else if (spec.arch == Architecture::rnn) {
        auto cell = bind_rnn(tape, model.params, "rnn.");
        NodeId h = tape.constant(NumArray::zeros({B, spec.hidden}));
        std::vector<NodeId> hs;
        for (std::int64_t tt = 0; tt < spec.months; ++tt) {
            h = rnn_step(tape, tape.slice_time(seq, tt), h, cell);
            hs.push_back(h);
        }
        flat = tape.concat_last(hs);
    } else if (spec.arch == Architecture::cnn) {
        auto conv = bind_conv(tape, model.params, "conv.");
        NodeId c = tape.relu(tape.conv1d(seq, conv.w, conv.b));
        flat = tape.max_over_time(c); // B x C
    } else {
        throw ConfigError("unhandled architecture in forward");
    }

    auto hd = bind_head(tape, model.params, "head.");
    return head_logits(tape, flat, hd);
}

NumArray forward(const Model& model, const NumArray& batch) {
    Tape tape;
    NodeId x = tape.constant(batch);
    NodeId logits = forward_logits(tape, model, x);
    NodeId probs = tape.clamp(tape.sigmoid(logits), 5e-324, 1.0 - 1.1102230246251565e-16);
    return tape.value(probs);
}

ModelSpec ablation_variant(const ModelSpec& base, const std::string& which) {
    if (base.arch != Architecture::rese_bilstm) {
        throw ContractError("ablation variants are defined relative to rese_bilstm");
    }
    ModelSpec out = base;
    if (which == "M1") out.arch = Architecture::m1_e_bilstm;
    else if (which == "M2") out.arch = Architecture::m2_a_bilstm;
    else if (which == "M3") out.arch = Architecture::bilstm;
    else if (which == "M4") out.arch = Architecture::m4_rese_lstm;
    else throw ConfigError("unknown ablation tag '" + which + "' (expected M1..M4)");
    return out;
}

std::string spec_to_json(const ModelSpec& spec) {
    nlohmann::json j;
    j["architecture"] = to_string(spec.arch);
    j["months"] = spec.months;
    j["features"] = spec.features;
    j["hidden"] = spec.hidden;
    j["heads"] = spec.heads;
    j["d_k"] = spec.d_k;
    j["d_head"] = spec.d_head;
    j["ffn_inner"] = spec.ffn_inner;
    j["conv_kernel"] = spec.conv_kernel;
    j["conv_channels"] = spec.conv_channels;
    j["dropout"] = spec.dropout;
    j["seed"] = spec.seed;
    return j.dump(2);
}

ModelSpec spec_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ModelSpec spec;
    spec.arch = architecture_from_string(j.at("architecture").get<std::string>());
    spec.months = j.at("months").get<std::int64_t>();
    spec.features = j.at("features").get<std::int64_t>();
    spec.hidden = j.at("hidden").get<std::int64_t>();
    spec.heads = j.at("heads").get<std::int64_t>();
    spec.d_k = j.at("d_k").get<std::int64_t>();
    spec.d_head = j.at("d_head").get<std::int64_t>();
    spec.ffn_inner = j.value("ffn_inner", std::int64_t{256});
    spec.conv_kernel = j.value("conv_kernel", std::int64_t{3});
    spec.conv_channels = j.value("conv_channels", std::int64_t{64});
    spec.dropout = j.at("dropout").get<double>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    return spec;
}

void save_model(const std::string& path, const Model& model) {
    save_checkpoint(path, model.params);
    std::ofstream os(path + ".spec.json");
    if (!os) throw ContractError("cannot write sidecar for '" + path + "'");
    os << spec_to_json(model.spec) << "\n";
}

Model load_model(const std::string& path) {
    std::ifstream is(path + ".spec.json");
    if (!is) throw ContractError("missing sidecar '" + path + ".spec.json'");
    std::stringstream buf;
    buf << is.rdbuf();
    Model m;
    m.spec = spec_from_json(buf.str());
    m.params = load_checkpoint(path);
    return m;
}

} // namespace reseb
