#pragma once

// Full pipeline wiring: prompt construction, encoding, span/pair/relation
// heads, teacher-forced training losses, threshold decoding, and checkpoint
// persistence behind one class.

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "relex/checkpoint.hpp"
#include "relex/config.hpp"
#include "relex/dataset.hpp"
#include "relex/encoder.hpp"
#include "relex/errors.hpp"
#include "relex/loss.hpp"
#include "relex/pair_head.hpp"
#include "relex/prompt.hpp"
#include "relex/relation_head.hpp"
#include "relex/span_head.hpp"

namespace relex {

/// Pretrained transformer adapters plug in here; the self-contained "toy"
/// backend ships by default so the whole pipeline runs without weights.
using BackendFactory = std::function<std::unique_ptr<EncoderBackend>(
    const Config&, nn::ParameterStore&, std::mt19937&)>;

inline std::map<std::string, BackendFactory>& backend_registry() {
    static std::map<std::string, BackendFactory> registry = [] {
        std::map<std::string, BackendFactory> r;
        r["toy"] = [](const Config& cfg, nn::ParameterStore& store, std::mt19937& rng) {
            ToyEncoderSettings s;
            s.dim = cfg.encoder.dim;
            s.layers = cfg.encoder.layers;
            s.heads = cfg.encoder.heads;
            s.vocab_size = cfg.encoder.vocab_size;
            return std::unique_ptr<EncoderBackend>(new ToyEncoder(store, s, rng));
        };
        return r;
    }();
    return registry;
}

inline void register_backend(const std::string& name, BackendFactory factory) {
    backend_registry()[name] = std::move(factory);
}

inline std::unique_ptr<EncoderBackend> make_backend(const Config& cfg,
                                                    nn::ParameterStore& store,
                                                    std::mt19937& rng) {
    auto& registry = backend_registry();
    auto it = registry.find(cfg.encoder.backbone);
    if (it == registry.end()) {
        std::string known;
        for (const auto& [name, factory] : registry) {
            if (!known.empty()) known += ", ";
            known += name;
        }
        throw ConfigError("backbone '" + cfg.encoder.backbone +
                          "' has no registered backend (available: " + known +
                          "); hook pretrained encoders in with register_backend()");
    }
    return it->second(cfg, store, rng);
}

struct ExtractionOptions {
    double entity_threshold = 0.3;
    double relation_threshold = 0.5;
    bool flat_ner = false;
};

struct Extraction {
    std::vector<Entity> entities;
    std::vector<RelationTriplet> relations;
};

/// Scalar loss components for one example, all living on the caller's tape.
struct TrainingStep {
    ag::Value entity;
    ag::Value adjacency;
    ag::Value relation;
    ag::Value total;
    int pruned_entities = 0;   // gold spans wider than max_width or past truncation
    int dropped_relations = 0; // relations whose endpoint was pruned
};

class Model {
public:
    Model(Config cfg, unsigned seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        aggregation_ = parse_aggregation(cfg_.encoder.aggregation);
        std::mt19937 rng(seed);
        backend_ = make_backend(cfg_, store_, rng);
        const int dim = backend_->dim();
        if (cfg_.encoder.bilstm) {
            if (2 * cfg_.encoder.bilstm_hidden != dim)
                throw ConfigError(
                    "encoder: bilstm_hidden must be dim/2 so the refined word "
                    "width stays equal to the type embedding width");
            bilstm_.emplace(nn::BiLstm::create(store_, "encoder.bilstm", dim,
                                               cfg_.encoder.bilstm_hidden, rng));
        }
        SpanHead::Settings span_settings;
        span_settings.dim = dim;
        span_settings.max_width = cfg_.span.max_width;
        span_settings.width_embedding_dim = cfg_.span.width_embedding_dim;
        span_head_.emplace(store_, span_settings, rng);
        if (cfg_.pair.adjacency_decoder != "none") {
            AdjacencyDecoder::Settings adj_settings;
            adj_settings.kind = parse_adjacency_kind(cfg_.pair.adjacency_decoder);
            adj_settings.dim = dim;
            adj_settings.projection_dim = cfg_.pair.projection_dim;
            adj_settings.heads = cfg_.pair.heads;
            adj_settings.normalize = cfg_.pair.normalize;
            adjacency_.emplace(store_, adj_settings, rng);
        }
        RelationHead::Settings rel_settings;
        rel_settings.dim = dim;
        rel_settings.scorer = parse_scorer_kind(cfg_.relation.scorer);
        rel_settings.dropout = cfg_.relation.dropout;
        relation_head_.emplace(store_, rel_settings, rng);
    }

    const Config& config() const { return cfg_; }
    int dim() const { return backend_->dim(); }
    nn::ParameterStore& parameters() { return store_; }
    const nn::ParameterStore& parameters() const { return store_; }
    const nlohmann::json& metadata() const { return meta_; }

    /// Decode entities and relations from raw words under the given labels.
    Extraction extract(const std::vector<std::string>& words,
                       const std::vector<std::string>& entity_labels,
                       const std::vector<std::string>& relation_labels,
                       const ExtractionOptions& opts = {}) {
        ag::Tape tape;
        PromptLayout layout =
            build_prompt(entity_labels, relation_labels,
                         truncate_words(words, cfg_.encoder.max_words));
        EncodedViews views = run_encoder(tape, layout);

        std::vector<Span> spans =
            enumerate_spans(layout.word_count, cfg_.span.max_width);
        Extraction out;
        // a probability never reaches 1, so a threshold at or past it means
        // "emit nothing" rather than a decoding error
        if (spans.empty() || opts.entity_threshold >= 1.0) return out;

        ag::Value span_reps = span_head_->represent(tape, views.word_reps, spans);
        ag::Value type_reps = span_head_->project_types(tape, views.entity_type_reps);
        Matrix entity_logits = score_entities(span_reps, type_reps).val();
        out.entities = decode_entities(entity_logits, spans, opts.entity_threshold,
                                       opts.flat_ner);
        if (out.entities.size() < 2 || relation_labels.empty() ||
            opts.relation_threshold >= 1.0)
            return out;

        std::vector<Span> entity_spans;
        entity_spans.reserve(out.entities.size());
        for (const Entity& e : out.entities) entity_spans.push_back(e.span);
        ag::Value entity_reps =
            span_head_->represent(tape, views.word_reps, entity_spans);

        PairCandidateSet candidates;
        if (cfg_.pair.strategy == "all_pairs") {
            candidates = enumerate_all_pairs(out.entities);
        } else {
            Matrix adjacency = adjacency_->score(tape, entity_reps).val();
            candidates = select_pairs(adjacency, cfg_.pair.threshold);
        }
        if (candidates.pairs.empty()) return out;

        std::mt19937 unused_rng(0);
        Matrix relation_logits =
            relation_head_
                ->score(tape, entity_reps, candidates.pairs,
                        views.relation_type_reps, false, unused_rng)
                .val();
        out.relations = decode_relations(relation_logits, candidates, out.entities,
                                         opts.relation_threshold);
        return out;
    }

    /// Teacher-forced losses for one annotated example. Pair and relation
    /// supervision runs over gold spans; when training, label order is
    /// shuffled so type embeddings carry the signal rather than positions.
    TrainingStep training_loss(ag::Tape& tape, const AnnotatedExample& example,
                               const std::vector<std::string>& entity_labels,
                               const std::vector<std::string>& relation_labels,
                               std::mt19937& rng, bool training = true) {
        std::vector<std::string> ents = entity_labels;
        std::vector<std::string> rels = relation_labels;
        if (training) {
            std::shuffle(ents.begin(), ents.end(), rng);
            std::shuffle(rels.begin(), rels.end(), rng);
        }
        PromptLayout layout = build_prompt(
            ents, rels, truncate_words(example.tokens, cfg_.encoder.max_words));
        EncodedViews views = run_encoder(tape, layout);
        const LossConfig& lc = cfg_.loss;
        const bool subsample = training && lc.negative_sample_rate < 1.0;

        TrainingStep step{ag::constant_scalar(tape, 0.0),
                          ag::constant_scalar(tape, 0.0),
                          ag::constant_scalar(tape, 0.0),
                          ag::constant_scalar(tape, 0.0)};

        // entity grid over every enumerable span
        std::vector<Span> spans =
            enumerate_spans(layout.word_count, cfg_.span.max_width);
        std::map<std::pair<int, int>, int> span_row;
        for (std::size_t i = 0; i < spans.size(); ++i)
            span_row[{spans[i].start, spans[i].end}] = static_cast<int>(i);

        Matrix entity_targets =
            Matrix::Zero(static_cast<Eigen::Index>(spans.size()),
                         static_cast<Eigen::Index>(ents.size()));
        std::vector<Entity> retained;
        std::vector<int> retained_index(example.gold_entities.size(), -1);
        std::vector<Span> gold_spans;
        for (std::size_t i = 0; i < example.gold_entities.size(); ++i) {
            const GoldEntity& g = example.gold_entities[i];
            auto it = std::find(ents.begin(), ents.end(), g.label);
            if (it == ents.end())
                throw ContractError("training example uses entity label '" +
                                    g.label + "' missing from the inventory");
            int type = static_cast<int>(it - ents.begin());
            int width = g.end - g.start + 1;
            if (g.end >= layout.word_count || width > cfg_.span.max_width) {
                ++step.pruned_entities;
                continue;
            }
            entity_targets(span_row.at({g.start, g.end}), type) = 1.0;
            retained_index[i] = static_cast<int>(retained.size());
            retained.push_back(Entity{Span{g.start, g.end}, type, 1.0});
            gold_spans.push_back(Span{g.start, g.end});
        }

        if (!spans.empty() && !ents.empty()) {
            ag::Value span_reps =
                span_head_->represent(tape, views.word_reps, spans);
            ag::Value type_reps =
                span_head_->project_types(tape, views.entity_type_reps);
            ag::Value entity_logits = score_entities(span_reps, type_reps);
            Matrix keep = subsample ? negative_sample(entity_targets,
                                                      lc.negative_sample_rate, rng())
                                    : Matrix::Ones(entity_targets.rows(),
                                                   entity_targets.cols());
            step.entity = entity_loss(tape, entity_logits, entity_targets, keep, lc);
        }

        const int n = static_cast<int>(retained.size());
        ag::Value gold_reps;
        if (n >= 1)
            gold_reps = span_head_->represent(tape, views.word_reps, gold_spans);

        // soft adjacency over gold entities, both orientations, no self pairs
        if (adjacency_ && lc.lambda_adjacency > 0.0 && n >= 2) {
            ag::Value adjacency_probs = adjacency_->score(tape, gold_reps);
            Matrix adjacency_targets = Matrix::Zero(n, n);
            for (const GoldRelation& r : example.gold_relations) {
                int h = retained_index[r.head];
                int t = retained_index[r.tail];
                if (h < 0 || t < 0 || h == t) continue;
                adjacency_targets(h, t) = 1.0;
                adjacency_targets(t, h) = 1.0;
            }
            Matrix keep = Matrix::Ones(n, n) - Matrix::Identity(n, n);
            step.adjacency =
                adjacency_loss(tape, adjacency_probs, adjacency_targets, keep, lc);
        }

        // relation grid over every ordered gold pair
        PairCandidateSet candidates;
        if (n >= 2) candidates = enumerate_all_pairs(retained);
        if (!candidates.pairs.empty() && !rels.empty()) {
            std::map<std::pair<int, int>, int> pair_row;
            for (std::size_t i = 0; i < candidates.pairs.size(); ++i)
                pair_row[candidates.pairs[i]] = static_cast<int>(i);
            Matrix relation_targets =
                Matrix::Zero(static_cast<Eigen::Index>(candidates.pairs.size()),
                             static_cast<Eigen::Index>(rels.size()));
            for (const GoldRelation& r : example.gold_relations) {
                auto it = std::find(rels.begin(), rels.end(), r.label);
                if (it == rels.end())
                    throw ContractError("training example uses relation label '" +
                                        r.label + "' missing from the inventory");
                int h = retained_index[r.head];
                int t = retained_index[r.tail];
                if (h < 0 || t < 0 || h == t) {
                    ++step.dropped_relations;
                    continue;
                }
                relation_targets(pair_row.at({h, t}),
                                 static_cast<int>(it - rels.begin())) = 1.0;
            }
            ag::Value relation_logits =
                relation_head_->score(tape, gold_reps, candidates.pairs,
                                      views.relation_type_reps, training, rng);
            Matrix keep = subsample
                              ? negative_sample(relation_targets,
                                                lc.negative_sample_rate, rng())
                              : Matrix::Ones(relation_targets.rows(),
                                             relation_targets.cols());
            step.relation =
                relation_loss(tape, relation_logits, relation_targets, keep, lc);
        } else {
            for (const GoldRelation& r : example.gold_relations) {
                int h = retained_index[r.head];
                int t = retained_index[r.tail];
                if (h < 0 || t < 0 || h == t) ++step.dropped_relations;
            }
        }

        step.total = total_loss(tape, step.entity, step.adjacency, step.relation, lc);
        return step;
    }

    /// Deterministic mean total loss (no shuffling, dropout, or sampling).
    double eval_total_loss(const std::vector<AnnotatedExample>& data,
                           const std::vector<std::string>& entity_labels,
                           const std::vector<std::string>& relation_labels) {
        if (data.empty())
            throw ConfigError("eval_total_loss needs a nonempty dataset");
        std::mt19937 unused_rng(0);
        double sum = 0.0;
        for (const AnnotatedExample& ex : data) {
            ag::Tape tape;
            TrainingStep step = training_loss(tape, ex, entity_labels,
                                              relation_labels, unused_rng, false);
            sum += step.total.scalar();
        }
        return sum / static_cast<double>(data.size());
    }

    /// Named-tensor archive; `extra` lands in the manifest next to the
    /// architecture fields, so callers can record provenance like the final
    /// training loss.
    void save(const std::string& path, nlohmann::json extra = nlohmann::json::object()) const {
        nlohmann::json meta = std::move(extra);
        meta["dim"] = backend_->dim();
        meta["layers"] = cfg_.encoder.layers;
        meta["aggregation"] = cfg_.encoder.aggregation;
        meta["config"] = serialize_config(cfg_);
        write_checkpoint(path, meta, store_);
    }

    static Model load(const std::string& path) {
        CheckpointData data = read_checkpoint(path);
        if (!data.meta.contains("config") || !data.meta["config"].is_string())
            throw ParseError("checkpoint manifest lacks the config text: " + path);
        Config cfg = parse_config(data.meta["config"].get<std::string>());
        Model model(cfg, 0);
        load_into_store(data, model.store_);
        model.meta_ = std::move(data.meta);
        return model;
    }

private:
    EncodedViews run_encoder(ag::Tape& tape, const PromptLayout& layout) {
        Segmentation seg = backend_->segment(layout);
        ag::Value hidden = encode(tape, *backend_, layout, seg);
        EncodedViews views =
            aggregate_subwords(tape, hidden, layout, seg, aggregation_);
        views.word_reps =
            bilstm_refine(tape, views.word_reps,
                          bilstm_ ? &*bilstm_ : nullptr, cfg_.encoder.bilstm);
        return views;
    }

    Config cfg_;
    Aggregation aggregation_ = Aggregation::First;
    nn::ParameterStore store_;
    std::unique_ptr<EncoderBackend> backend_;
    std::optional<nn::BiLstm> bilstm_;
    std::optional<SpanHead> span_head_;
    std::optional<AdjacencyDecoder> adjacency_;
    std::optional<RelationHead> relation_head_;
    nlohmann::json meta_ = nlohmann::json::object();
};

} // namespace relex
