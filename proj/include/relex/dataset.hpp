#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "relex/errors.hpp"

namespace relex {

/// Gold entity annotation: inclusive word span plus a type label string.
struct GoldEntity {
    int start = 0;
    int end = 0;
    std::string label;

    bool operator==(const GoldEntity&) const = default;
};

/// Directed gold relation between two entries of `gold_entities`.
struct GoldRelation {
    int head = 0; // index into gold_entities
    int tail = 0;
    std::string label;

    bool operator==(const GoldRelation&) const = default;
};

struct AnnotatedExample {
    std::vector<std::string> tokens;
    std::vector<GoldEntity> gold_entities;
    std::vector<GoldRelation> gold_relations;

    bool operator==(const AnnotatedExample&) const = default;
};

/// Checks the structural invariants: spans inside the token range, relation
/// endpoints inside the entity list. `line` (1-based) is echoed in errors so
/// callers can point at the offending record; 0 means "not from a file".
inline void validate_example(const AnnotatedExample& ex, std::size_t line = 0) {
    const int words = static_cast<int>(ex.tokens.size());
    for (const GoldEntity& e : ex.gold_entities) {
        if (e.start < 0 || e.end < e.start || e.end >= words)
            throw ParseError("entity span out of bounds: [" + std::to_string(e.start) + ", " +
                                 std::to_string(e.end) + "] over " + std::to_string(words) +
                                 " tokens",
                             line);
    }
    const int entities = static_cast<int>(ex.gold_entities.size());
    for (const GoldRelation& r : ex.gold_relations) {
        if (r.head < 0 || r.head >= entities || r.tail < 0 || r.tail >= entities)
            throw ParseError("dangling relation endpoint (" + std::to_string(r.head) + ", " +
                                 std::to_string(r.tail) + ") with " + std::to_string(entities) +
                                 " entities",
                             line);
    }
}

namespace detail {

inline const nlohmann::json& require_array(const nlohmann::json& rec, const char* name,
                                           std::size_t line) {
    auto it = rec.find(name);
    if (it == rec.end())
        throw ParseError(std::string("missing field '") + name + "'", line);
    if (!it->is_array())
        throw ParseError(std::string("field '") + name + "' must be an array", line);
    return *it;
}

} // namespace detail

inline AnnotatedExample example_from_json(const nlohmann::json& rec, std::size_t line = 0) {
    if (!rec.is_object())
        throw ParseError("record must be a JSON object", line);
    AnnotatedExample ex;
    for (const auto& tok : detail::require_array(rec, "tokens", line)) {
        if (!tok.is_string())
            throw ParseError("tokens must be strings", line);
        ex.tokens.push_back(tok.get<std::string>());
    }
    for (const auto& ent : detail::require_array(rec, "entities", line)) {
        if (!ent.is_object() || !ent.contains("start") || !ent.contains("end") ||
            !ent.contains("label") || !ent["start"].is_number_integer() ||
            !ent["end"].is_number_integer() || !ent["label"].is_string())
            throw ParseError("entity needs integer 'start'/'end' and string 'label'", line);
        ex.gold_entities.push_back(
            {ent["start"].get<int>(), ent["end"].get<int>(), ent["label"].get<std::string>()});
    }
    for (const auto& rel : detail::require_array(rec, "relations", line)) {
        if (!rel.is_object() || !rel.contains("head") || !rel.contains("tail") ||
            !rel.contains("label") || !rel["head"].is_number_integer() ||
            !rel["tail"].is_number_integer() || !rel["label"].is_string())
            throw ParseError("relation needs integer 'head'/'tail' and string 'label'", line);
        ex.gold_relations.push_back(
            {rel["head"].get<int>(), rel["tail"].get<int>(), rel["label"].get<std::string>()});
    }
    validate_example(ex, line);
    return ex;
}

inline nlohmann::json example_to_json(const AnnotatedExample& ex) {
    nlohmann::json rec;
    rec["tokens"] = ex.tokens;
    rec["entities"] = nlohmann::json::array();
    for (const GoldEntity& e : ex.gold_entities)
        rec["entities"].push_back({{"start", e.start}, {"end", e.end}, {"label", e.label}});
    rec["relations"] = nlohmann::json::array();
    for (const GoldRelation& r : ex.gold_relations)
        rec["relations"].push_back({{"head", r.head}, {"tail", r.tail}, {"label", r.label}});
    return rec;
}

/// Reads line-delimited JSON records. Blank lines are skipped; any malformed
/// record aborts the whole read with its line number.
inline std::vector<AnnotatedExample> read_jsonl(std::istream& in) {
    std::vector<AnnotatedExample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), lineno);
        }
        out.push_back(example_from_json(rec, lineno));
    }
    return out;
}

inline std::vector<AnnotatedExample> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open dataset file: " + path);
    return read_jsonl(in);
}

inline void write_jsonl(std::ostream& out, const std::vector<AnnotatedExample>& examples) {
    for (const AnnotatedExample& ex : examples)
        out << example_to_json(ex).dump() << '\n';
}

inline void save_dataset(const std::string& path, const std::vector<AnnotatedExample>& examples) {
    std::ofstream out(path);
    if (!out)
        throw ParseError("cannot open output file: " + path);
    write_jsonl(out, examples);
}

/// Sorted, de-duplicated entity type labels appearing in the gold annotations.
inline std::vector<std::string> entity_label_inventory(const std::vector<AnnotatedExample>& data) {
    std::set<std::string> labels;
    for (const AnnotatedExample& ex : data)
        for (const GoldEntity& e : ex.gold_entities)
            labels.insert(e.label);
    return {labels.begin(), labels.end()};
}

inline std::vector<std::string>
relation_label_inventory(const std::vector<AnnotatedExample>& data) {
    std::set<std::string> labels;
    for (const AnnotatedExample& ex : data)
        for (const GoldRelation& r : ex.gold_relations)
            labels.insert(r.label);
    return {labels.begin(), labels.end()};
}

} // namespace relex
