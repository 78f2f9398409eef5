#pragma once

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>

#include "relex/encoder.hpp"
#include "relex/errors.hpp"
#include "relex/loss.hpp"
#include "relex/pair_head.hpp"
#include "relex/relation_head.hpp"

namespace relex {

struct EncoderConfig {
    std::string backbone = "deberta-v3-large"; // resolved through the backend registry
    int max_words = 2048;
    int bilstm_hidden = 1024; // per direction
    bool bilstm = true;
    std::string aggregation = "first";
    // toy-backbone shape
    int dim = 64;
    int layers = 2;
    int heads = 4;
    int vocab_size = 4096;

    bool operator==(const EncoderConfig&) const = default;
};

struct SpanConfig {
    int max_width = 12;
    int width_embedding_dim = 16;

    bool operator==(const SpanConfig&) const = default;
};

struct PairConfig {
    std::string strategy = "all_pairs";     // all_pairs | adjacency
    std::string adjacency_decoder = "none"; // none | dot | bilinear | mlp | attention | gcn | gat
    int projection_dim = 32;
    int heads = 4;
    bool normalize = false;
    double threshold = 0.5; // adjacency selection cutoff

    bool operator==(const PairConfig&) const = default;
};

struct RelationConfig {
    std::string scorer = "pair_mlp";
    double dropout = 0.1;

    bool operator==(const RelationConfig&) const = default;
};

/// One optimization stage: AdamW with decoupled weight decay, differential
/// learning rates for the encoder and the task heads, linear warmup.
struct StageConfig {
    std::string optimizer = "adamw";
    double encoder_lr = 0.0;
    double head_lr = 0.0;
    double warmup_ratio = 0.05;
    int batch_size = 8;
    int epochs = 0;
    double weight_decay = 0.0;

    bool operator==(const StageConfig&) const = default;

    void validate(const char* name) const {
        if (optimizer != "adamw")
            throw ConfigError(std::string(name) + ": unsupported optimizer '" + optimizer + "'");
        if (encoder_lr < 0.0 || head_lr < 0.0)
            throw ConfigError(std::string(name) + ": learning rates must be nonnegative");
        if (warmup_ratio < 0.0 || warmup_ratio >= 1.0)
            throw ConfigError(std::string(name) + ": warmup_ratio must lie in [0, 1)");
        if (batch_size < 1)
            throw ConfigError(std::string(name) + ": batch_size must be at least 1");
        if (epochs < 0)
            throw ConfigError(std::string(name) + ": epochs must be nonnegative");
        if (weight_decay < 0.0)
            throw ConfigError(std::string(name) + ": weight_decay must be nonnegative");
    }
};

struct InferenceConfig {
    double entity_threshold = 0.3;
    double relation_threshold = 0.5;
    bool flat_ner = false; // nested decoding by default

    bool operator==(const InferenceConfig&) const = default;
};

struct Config {
    EncoderConfig encoder;
    SpanConfig span;
    PairConfig pair;
    RelationConfig relation;
    LossConfig loss;
    StageConfig stage1;
    StageConfig stage2;
    InferenceConfig inference;

    bool operator==(const Config&) const = default;

    void validate() const {
        if (encoder.backbone.empty())
            throw ConfigError("encoder: backbone must be named");
        if (encoder.max_words < 1)
            throw ConfigError("encoder: max_words must be at least 1");
        if (encoder.dim < 1 || encoder.layers < 1 || encoder.heads < 1 ||
            encoder.vocab_size <= ToyEncoder::kReservedIds)
            throw ConfigError("encoder: invalid toy backbone shape");
        if (encoder.dim % encoder.heads != 0)
            throw ConfigError("encoder: heads must divide dim");
        if (encoder.bilstm_hidden < 1)
            throw ConfigError("encoder: bilstm_hidden must be at least 1");
        parse_aggregation(encoder.aggregation);
        if (span.max_width < 1)
            throw ConfigError("span: max_width must be at least 1");
        if (span.width_embedding_dim < 1)
            throw ConfigError("span: width_embedding_dim must be at least 1");
        if (pair.strategy != "all_pairs" && pair.strategy != "adjacency")
            throw ConfigError("pair_construction: unknown strategy '" + pair.strategy + "'");
        if (pair.adjacency_decoder != "none")
            parse_adjacency_kind(pair.adjacency_decoder);
        if (pair.strategy == "adjacency" && pair.adjacency_decoder == "none")
            throw ConfigError("pair_construction: adjacency strategy needs a decoder");
        if (pair.projection_dim < 1 || pair.heads < 1)
            throw ConfigError("pair_construction: invalid decoder shape");
        if (pair.threshold < 0.0 || pair.threshold > 1.0)
            throw ConfigError("pair_construction: threshold must lie in [0, 1]");
        parse_scorer_kind(relation.scorer);
        if (relation.dropout < 0.0 || relation.dropout >= 1.0)
            throw ConfigError("relation: dropout must lie in [0, 1)");
        loss.validate();
        stage1.validate("stage1");
        stage2.validate("stage2");
        if (inference.entity_threshold <= 0.0 || inference.entity_threshold >= 1.0 ||
            inference.relation_threshold <= 0.0 || inference.relation_threshold >= 1.0)
            throw ConfigError("inference: thresholds must lie in (0, 1)");
    }
};

/// The released-checkpoint hyperparameters; the documented defaults.
inline Config paper_defaults() {
    Config cfg;
    cfg.stage1.encoder_lr = 1e-5;
    cfg.stage1.head_lr = 5e-5;
    cfg.stage1.epochs = 1;
    cfg.stage2.encoder_lr = 3e-6;
    cfg.stage2.head_lr = 5e-6;
    cfg.stage2.epochs = 5;
    return cfg;
}

/// Desk-scale variant: trainable toy backbone with learning rates scaled up
/// to suit it. Everything else keeps the documented defaults.
inline Config toy_defaults() {
    Config cfg = paper_defaults();
    cfg.encoder.backbone = "toy";
    cfg.encoder.bilstm_hidden = 32;
    cfg.stage1.encoder_lr = 1e-4;
    cfg.stage1.head_lr = 1e-3;
    cfg.stage2.encoder_lr = 1e-4;
    cfg.stage2.head_lr = 1e-3;
    return cfg;
}

namespace detail {

inline std::string format_double(double v) {
    std::array<char, 32> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

inline std::string format_bool(bool v) { return v ? "true" : "false"; }

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos)
        return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline int parse_config_int(const std::string& value, const std::string& where,
                            std::size_t line) {
    int out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size())
        throw ParseError("bad integer for " + where + ": '" + value + "'", line);
    return out;
}

inline double parse_config_double(const std::string& value, const std::string& where,
                                  std::size_t line) {
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size())
        throw ParseError("bad number for " + where + ": '" + value + "'", line);
    return out;
}

inline bool parse_config_bool(const std::string& value, const std::string& where,
                              std::size_t line) {
    if (value == "true")
        return true;
    if (value == "false")
        return false;
    throw ParseError("bad boolean for " + where + ": '" + value + "'", line);
}

inline void apply_config_key(Config& cfg, const std::string& section, const std::string& key,
                             const std::string& value, std::size_t line) {
    const std::string where = section + "." + key;
    auto as_int = [&] { return parse_config_int(value, where, line); };
    auto as_double = [&] { return parse_config_double(value, where, line); };
    auto as_bool = [&] { return parse_config_bool(value, where, line); };

    if (section == "encoder") {
        if (key == "backbone") cfg.encoder.backbone = value;
        else if (key == "max_words") cfg.encoder.max_words = as_int();
        else if (key == "bilstm_hidden") cfg.encoder.bilstm_hidden = as_int();
        else if (key == "bilstm") cfg.encoder.bilstm = as_bool();
        else if (key == "aggregation") cfg.encoder.aggregation = value;
        else if (key == "dim") cfg.encoder.dim = as_int();
        else if (key == "layers") cfg.encoder.layers = as_int();
        else if (key == "heads") cfg.encoder.heads = as_int();
        else if (key == "vocab_size") cfg.encoder.vocab_size = as_int();
        else throw ParseError("unknown key '" + where + "'", line);
    } else if (section == "span") {
        if (key == "max_width") cfg.span.max_width = as_int();
        else if (key == "width_embedding_dim") cfg.span.width_embedding_dim = as_int();
        else throw ParseError("unknown key '" + where + "'", line);
    } else if (section == "pair_construction") {
        if (key == "strategy") cfg.pair.strategy = value;
        else if (key == "adjacency_decoder") cfg.pair.adjacency_decoder = value;
        else if (key == "projection_dim") cfg.pair.projection_dim = as_int();
        else if (key == "heads") cfg.pair.heads = as_int();
        else if (key == "normalize") cfg.pair.normalize = as_bool();
        else if (key == "threshold") cfg.pair.threshold = as_double();
        else throw ParseError("unknown key '" + where + "'", line);
    } else if (section == "relation") {
        if (key == "scorer") cfg.relation.scorer = value;
        else if (key == "dropout") cfg.relation.dropout = as_double();
        else throw ParseError("unknown key '" + where + "'", line);
    } else if (section == "loss") {
        if (key == "focal_alpha") cfg.loss.alpha = as_double();
        else if (key == "focal_gamma") cfg.loss.gamma = as_double();
        else if (key == "lambda_entity") cfg.loss.lambda_entity = as_double();
        else if (key == "lambda_adjacency") cfg.loss.lambda_adjacency = as_double();
        else if (key == "lambda_relation") cfg.loss.lambda_relation = as_double();
        else if (key == "negative_sample_rate") cfg.loss.negative_sample_rate = as_double();
        else throw ParseError("unknown key '" + where + "'", line);
    } else if (section == "stage1" || section == "stage2") {
        StageConfig& stage = section == "stage1" ? cfg.stage1 : cfg.stage2;
        if (key == "optimizer") stage.optimizer = value;
        else if (key == "encoder_lr") stage.encoder_lr = as_double();
        else if (key == "head_lr") stage.head_lr = as_double();
        else if (key == "warmup_ratio") stage.warmup_ratio = as_double();
        else if (key == "batch_size") stage.batch_size = as_int();
        else if (key == "epochs") stage.epochs = as_int();
        else if (key == "weight_decay") stage.weight_decay = as_double();
        else throw ParseError("unknown key '" + where + "'", line);
    } else if (section == "inference") {
        if (key == "entity_threshold") cfg.inference.entity_threshold = as_double();
        else if (key == "relation_threshold") cfg.inference.relation_threshold = as_double();
        else if (key == "flat_ner") cfg.inference.flat_ner = as_bool();
        else throw ParseError("unknown key '" + where + "'", line);
    } else {
        throw ParseError("unknown section [" + section + "]", line);
    }
}

} // namespace detail

/// Deterministic rendering: fixed section and key order, shortest
/// round-tripping number spellings. serialize(parse(serialize(c))) is
/// byte-identical to serialize(c).
inline std::string serialize_config(const Config& cfg) {
    using detail::format_bool;
    using detail::format_double;
    std::ostringstream out;
    out << "[encoder]\n";
    out << "backbone = " << cfg.encoder.backbone << '\n';
    out << "max_words = " << cfg.encoder.max_words << '\n';
    out << "bilstm_hidden = " << cfg.encoder.bilstm_hidden << '\n';
    out << "bilstm = " << format_bool(cfg.encoder.bilstm) << '\n';
    out << "aggregation = " << cfg.encoder.aggregation << '\n';
    out << "dim = " << cfg.encoder.dim << '\n';
    out << "layers = " << cfg.encoder.layers << '\n';
    out << "heads = " << cfg.encoder.heads << '\n';
    out << "vocab_size = " << cfg.encoder.vocab_size << '\n';
    out << "\n[span]\n";
    out << "max_width = " << cfg.span.max_width << '\n';
    out << "width_embedding_dim = " << cfg.span.width_embedding_dim << '\n';
    out << "\n[pair_construction]\n";
    out << "strategy = " << cfg.pair.strategy << '\n';
    out << "adjacency_decoder = " << cfg.pair.adjacency_decoder << '\n';
    out << "projection_dim = " << cfg.pair.projection_dim << '\n';
    out << "heads = " << cfg.pair.heads << '\n';
    out << "normalize = " << format_bool(cfg.pair.normalize) << '\n';
    out << "threshold = " << format_double(cfg.pair.threshold) << '\n';
    out << "\n[relation]\n";
    out << "scorer = " << cfg.relation.scorer << '\n';
    out << "dropout = " << format_double(cfg.relation.dropout) << '\n';
    out << "\n[loss]\n";
    out << "focal_alpha = " << format_double(cfg.loss.alpha) << '\n';
    out << "focal_gamma = " << format_double(cfg.loss.gamma) << '\n';
    out << "lambda_entity = " << format_double(cfg.loss.lambda_entity) << '\n';
    out << "lambda_adjacency = " << format_double(cfg.loss.lambda_adjacency) << '\n';
    out << "lambda_relation = " << format_double(cfg.loss.lambda_relation) << '\n';
    out << "negative_sample_rate = " << format_double(cfg.loss.negative_sample_rate) << '\n';
    auto stage = [&](const char* name, const StageConfig& s) {
        out << "\n[" << name << "]\n";
        out << "optimizer = " << s.optimizer << '\n';
        out << "encoder_lr = " << format_double(s.encoder_lr) << '\n';
        out << "head_lr = " << format_double(s.head_lr) << '\n';
        out << "warmup_ratio = " << format_double(s.warmup_ratio) << '\n';
        out << "batch_size = " << s.batch_size << '\n';
        out << "epochs = " << s.epochs << '\n';
        out << "weight_decay = " << format_double(s.weight_decay) << '\n';
    };
    stage("stage1", cfg.stage1);
    stage("stage2", cfg.stage2);
    out << "\n[inference]\n";
    out << "entity_threshold = " << format_double(cfg.inference.entity_threshold) << '\n';
    out << "relation_threshold = " << format_double(cfg.inference.relation_threshold) << '\n';
    out << "flat_ner = " << format_bool(cfg.inference.flat_ner) << '\n';
    return out.str();
}

/// Parses INI-style text over a base configuration; keys left out keep the
/// base values. '#' and ';' start comments.
inline Config parse_config(const std::string& text, Config base = paper_defaults()) {
    std::istringstream in(text);
    std::string raw;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::size_t comment = raw.find_first_of("#;");
        std::string line = detail::trim(comment == std::string::npos ? raw
                                                                     : raw.substr(0, comment));
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3)
                throw ParseError("malformed section header: '" + line + "'", lineno);
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("expected 'key = value': '" + line + "'", lineno);
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (section.empty())
            throw ParseError("key '" + key + "' before any [section]", lineno);
        if (key.empty())
            throw ParseError("empty key", lineno);
        detail::apply_config_key(base, section, key, value, lineno);
    }
    return base;
}

inline Config load_config(const std::string& path, Config base = paper_defaults()) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open config file: " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), std::move(base));
}

inline void save_config(const std::string& path, const Config& cfg) {
    std::ofstream out(path);
    if (!out)
        throw ParseError("cannot open output file: " + path);
    out << serialize_config(cfg);
}

} // namespace relex
