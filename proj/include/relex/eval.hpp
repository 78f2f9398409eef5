#pragma once

#include <cstddef>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "relex/dataset.hpp"
#include "relex/errors.hpp"
#include "relex/relation_head.hpp"
#include "relex/span_head.hpp"

namespace relex {

/// Pooled strict-match counts and the scores derived from them.
struct TaskMetrics {
    long long true_positives = 0;
    long long false_positives = 0;
    long long false_negatives = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

inline TaskMetrics finalize_metrics(long long tp, long long fp, long long fn) {
    TaskMetrics m;
    m.true_positives = tp;
    m.false_positives = fp;
    m.false_negatives = fn;
    m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
}

struct MetricsReport {
    TaskMetrics entities;
    TaskMetrics relations;
    std::map<std::string, long long> entity_support;   // gold instances per label
    std::map<std::string, long long> relation_support;

    std::string table() const {
        std::ostringstream out;
        out << std::fixed << std::setprecision(4);
        out << std::left << std::setw(10) << "task" << std::right << std::setw(10) << "precision"
            << std::setw(10) << "recall" << std::setw(10) << "micro-f1" << std::setw(8) << "tp"
            << std::setw(8) << "fp" << std::setw(8) << "fn" << '\n';
        auto row = [&](const char* name, const TaskMetrics& m) {
            out << std::left << std::setw(10) << name << std::right << std::setw(10) << m.precision
                << std::setw(10) << m.recall << std::setw(10) << m.f1 << std::setw(8)
                << m.true_positives << std::setw(8) << m.false_positives << std::setw(8)
                << m.false_negatives << '\n';
        };
        row("entities", entities);
        row("relations", relations);
        if (!entity_support.empty() || !relation_support.empty()) {
            out << "gold support:\n";
            for (const auto& [label, count] : entity_support)
                out << "  entity   " << std::left << std::setw(24) << label << std::right
                    << std::setw(6) << count << '\n';
            for (const auto& [label, count] : relation_support)
                out << "  relation " << std::left << std::setw(24) << label << std::right
                    << std::setw(6) << count << '\n';
        }
        return out.str();
    }

    nlohmann::json to_json() const {
        auto task = [](const TaskMetrics& m) {
            return nlohmann::json{{"precision", m.precision},
                                  {"recall", m.recall},
                                  {"micro_f1", m.f1},
                                  {"tp", m.true_positives},
                                  {"fp", m.false_positives},
                                  {"fn", m.false_negatives}};
        };
        nlohmann::json j;
        j["entities"] = task(entities);
        j["relations"] = task(relations);
        j["entity_support"] = entity_support;
        j["relation_support"] = relation_support;
        return j;
    }
};

namespace detail {

inline const std::string& label_at(const std::vector<std::string>& labels, int index,
                                   const char* what) {
    if (index < 0 || static_cast<std::size_t>(index) >= labels.size())
        throw ContractError(std::string(what) + ": label index out of range");
    return labels[static_cast<std::size_t>(index)];
}

} // namespace detail

/// Strict-match relation Micro-F1, pooled over all examples. A prediction is
/// a true positive iff head span, tail span, and relation label all equal a
/// gold triplet's, and each gold triplet can be claimed at most once. With
/// `require_entity_types` the head/tail entity type labels must match too
/// (`entity_labels` then resolves predicted type indices).
inline MetricsReport
micro_f1_relations(const std::vector<std::vector<RelationTriplet>>& predicted,
                   const std::vector<AnnotatedExample>& gold,
                   const std::vector<std::string>& relation_labels,
                   const std::vector<std::string>& entity_labels = {},
                   bool require_entity_types = false) {
    if (predicted.size() != gold.size())
        throw ContractError("micro_f1_relations: prediction/gold example counts differ");
    using Key = std::tuple<int, int, int, int, std::string, std::string, std::string>;
    MetricsReport report;
    long long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        std::map<Key, long long> unmatched;
        for (const GoldRelation& rel : gold[i].gold_relations) {
            const GoldEntity& h = gold[i].gold_entities.at(static_cast<std::size_t>(rel.head));
            const GoldEntity& t = gold[i].gold_entities.at(static_cast<std::size_t>(rel.tail));
            Key key{h.start,   h.end,
                    t.start,   t.end,
                    rel.label, require_entity_types ? h.label : std::string(),
                    require_entity_types ? t.label : std::string()};
            ++unmatched[key];
            ++report.relation_support[rel.label];
        }
        for (const RelationTriplet& p : predicted[i]) {
            std::string head_type, tail_type;
            if (require_entity_types) {
                head_type = detail::label_at(entity_labels, p.head.type_index, "micro_f1_relations");
                tail_type = detail::label_at(entity_labels, p.tail.type_index, "micro_f1_relations");
            }
            Key key{p.head.span.start,
                    p.head.span.end,
                    p.tail.span.start,
                    p.tail.span.end,
                    detail::label_at(relation_labels, p.relation_index, "micro_f1_relations"),
                    head_type,
                    tail_type};
            auto it = unmatched.find(key);
            if (it != unmatched.end() && it->second > 0) {
                --it->second;
                ++tp;
            } else {
                ++fp;
            }
        }
        for (const auto& [key, count] : unmatched)
            fn += count;
    }
    report.relations = finalize_metrics(tp, fp, fn);
    return report;
}

/// Strict-span entity Micro-F1: exact (start, end, label) match, each gold
/// entity claimable once, pooled over all examples.
inline MetricsReport entity_f1(const std::vector<std::vector<Entity>>& predicted,
                               const std::vector<AnnotatedExample>& gold,
                               const std::vector<std::string>& entity_labels) {
    if (predicted.size() != gold.size())
        throw ContractError("entity_f1: prediction/gold example counts differ");
    using Key = std::tuple<int, int, std::string>;
    MetricsReport report;
    long long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        std::map<Key, long long> unmatched;
        for (const GoldEntity& e : gold[i].gold_entities) {
            ++unmatched[Key{e.start, e.end, e.label}];
            ++report.entity_support[e.label];
        }
        for (const Entity& p : predicted[i]) {
            Key key{p.span.start, p.span.end,
                    detail::label_at(entity_labels, p.type_index, "entity_f1")};
            auto it = unmatched.find(key);
            if (it != unmatched.end() && it->second > 0) {
                --it->second;
                ++tp;
            } else {
                ++fp;
            }
        }
        for (const auto& [key, count] : unmatched)
            fn += count;
    }
    report.entities = finalize_metrics(tp, fp, fn);
    return report;
}

/// Convenience wrapper scoring both tasks into one report.
inline MetricsReport
evaluate_extractions(const std::vector<std::vector<Entity>>& predicted_entities,
                     const std::vector<std::vector<RelationTriplet>>& predicted_relations,
                     const std::vector<AnnotatedExample>& gold,
                     const std::vector<std::string>& entity_labels,
                     const std::vector<std::string>& relation_labels,
                     bool require_entity_types = false) {
    MetricsReport report = entity_f1(predicted_entities, gold, entity_labels);
    MetricsReport rel = micro_f1_relations(predicted_relations, gold, relation_labels,
                                           entity_labels, require_entity_types);
    report.relations = rel.relations;
    report.relation_support = std::move(rel.relation_support);
    return report;
}

} // namespace relex
