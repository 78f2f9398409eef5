#pragma once

#include <cctype>
#include <cstddef>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "relex/dataset.hpp"
#include "relex/errors.hpp"

namespace relex {

struct EntityTypeDef {
    std::string label;
    std::vector<std::string> surfaces; // each surface may be several words

    bool operator==(const EntityTypeDef&) const = default;
};

struct RelationDef {
    std::string label;
    std::string head_type;
    std::string tail_type;
    std::string paraphrase; // alias sharing a word with `label`; may be empty

    bool operator==(const RelationDef&) const = default;
};

/// A relation asserted by a template between two of its slots.
struct TemplateRelation {
    int head_slot = 0;
    int tail_slot = 0;
    std::string label;

    bool operator==(const TemplateRelation&) const = default;
};

/// Sentence skeleton. Pattern tokens of the form $k are replaced by a surface
/// drawn from slot k's entity type; everything else is emitted verbatim.
struct SentenceTemplate {
    std::string pattern;
    std::vector<std::string> slot_types;
    std::vector<TemplateRelation> relations;
    double weight = 1.0;

    bool operator==(const SentenceTemplate&) const = default;
};

struct GrammarSpec {
    std::vector<EntityTypeDef> entity_types;
    std::vector<RelationDef> relations;
    std::vector<SentenceTemplate> templates;
    unsigned seed = 0;

    bool operator==(const GrammarSpec&) const = default;

    void validate() const;
};

namespace detail {

inline std::vector<std::string> split_words(const std::string& text) {
    std::istringstream stream(text);
    std::vector<std::string> words;
    std::string word;
    while (stream >> word)
        words.push_back(word);
    return words;
}

/// Slot index for tokens like "$0"; -1 for ordinary tokens.
inline int slot_index(const std::string& token) {
    if (token.size() < 2 || token[0] != '$')
        return -1;
    for (std::size_t i = 1; i < token.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(token[i])))
            return -1;
    return std::stoi(token.substr(1));
}

} // namespace detail

inline void GrammarSpec::validate() const {
    if (entity_types.empty())
        throw ConfigError("grammar: entity type inventory is empty");
    std::set<std::string> type_labels;
    for (const EntityTypeDef& t : entity_types) {
        if (t.label.empty())
            throw ConfigError("grammar: entity type with empty label");
        if (!type_labels.insert(t.label).second)
            throw ConfigError("grammar: duplicate entity type '" + t.label + "'");
        if (t.surfaces.empty())
            throw ConfigError("grammar: entity type '" + t.label + "' has no surface forms");
        for (const std::string& s : t.surfaces)
            if (detail::split_words(s).empty())
                throw ConfigError("grammar: blank surface form under '" + t.label + "'");
    }
    std::set<std::string> relation_labels;
    for (const RelationDef& r : relations) {
        if (r.label.empty())
            throw ConfigError("grammar: relation with empty label");
        if (!relation_labels.insert(r.label).second)
            throw ConfigError("grammar: duplicate relation '" + r.label + "'");
        if (!type_labels.count(r.head_type) || !type_labels.count(r.tail_type))
            throw ConfigError("grammar: relation '" + r.label +
                              "' references an unknown entity type");
    }
    if (templates.empty())
        throw ConfigError("grammar: no sentence templates");
    for (const SentenceTemplate& tpl : templates) {
        if (tpl.weight <= 0.0)
            throw ConfigError("grammar: template weight must be positive: " + tpl.pattern);
        for (const std::string& slot_type : tpl.slot_types)
            if (!type_labels.count(slot_type))
                throw ConfigError("grammar: template slot type '" + slot_type +
                                  "' is not in the inventory");
        std::vector<int> seen(tpl.slot_types.size(), 0);
        for (const std::string& token : detail::split_words(tpl.pattern)) {
            int slot = detail::slot_index(token);
            if (slot < 0)
                continue;
            if (slot >= static_cast<int>(tpl.slot_types.size()))
                throw ConfigError("grammar: pattern references slot $" + std::to_string(slot) +
                                  " beyond the declared slots: " + tpl.pattern);
            if (seen[static_cast<std::size_t>(slot)]++)
                throw ConfigError("grammar: slot $" + std::to_string(slot) +
                                  " appears twice: " + tpl.pattern);
        }
        for (std::size_t k = 0; k < seen.size(); ++k)
            if (!seen[k])
                throw ConfigError("grammar: slot $" + std::to_string(k) +
                                  " never appears in the pattern: " + tpl.pattern);
        for (const TemplateRelation& rel : tpl.relations) {
            if (rel.head_slot < 0 || rel.head_slot >= static_cast<int>(tpl.slot_types.size()) ||
                rel.tail_slot < 0 || rel.tail_slot >= static_cast<int>(tpl.slot_types.size()))
                throw ConfigError("grammar: relation endpoint slot out of range: " + tpl.pattern);
            if (rel.head_slot == rel.tail_slot)
                throw ConfigError("grammar: relation between a slot and itself: " + tpl.pattern);
            const RelationDef* def = nullptr;
            for (const RelationDef& r : relations)
                if (r.label == rel.label)
                    def = &r;
            if (!def)
                throw ConfigError("grammar: template uses undeclared relation '" + rel.label +
                                  "'");
            if (tpl.slot_types[static_cast<std::size_t>(rel.head_slot)] != def->head_type ||
                tpl.slot_types[static_cast<std::size_t>(rel.tail_slot)] != def->tail_type)
                throw ConfigError("grammar: slot types disagree with relation '" + rel.label +
                                  "' in: " + tpl.pattern);
        }
    }
}

/// Small but non-degenerate grammar: 5 entity types, 4 relation types, each
/// relation carrying a paraphrase that shares its leading word so paraphrased
/// labels land near the originals in embedding space.
inline GrammarSpec default_grammar() {
    GrammarSpec g;
    g.entity_types = {
        {"person",
         {"Ada Lovelace", "Grace Hopper", "Alan Turing", "Marie Curie", "Niels Bohr",
          "Rosalind Franklin", "Archimedes", "Hypatia"}},
        {"organization",
         {"Acme Corp", "Globex", "Initech", "Stark Industries", "Wayne Enterprises",
          "Umbrella Labs"}},
        {"city", {"Paris", "London", "New York", "San Francisco", "Berlin", "Tokyo"}},
        {"date", {"March 3", "July 14", "January 1", "October 9", "May 20", "1912"}},
        {"product",
         {"Analytical Engine", "Model T", "Walkman", "Slide Rule", "Compass", "Difference Engine"}},
    };
    g.relations = {
        {"works for", "person", "organization", "works at"},
        {"born in", "person", "city", "born at"},
        {"located in", "organization", "city", "located at"},
        {"founded by", "organization", "person", "founded via"},
    };
    g.templates = {
        {"$0 works for $1 .", {"person", "organization"}, {{0, 1, "works for"}}, 1.5},
        {"$0 was born in $1 .", {"person", "city"}, {{0, 1, "born in"}}, 1.5},
        {"$0 is located in $1 .", {"organization", "city"}, {{0, 1, "located in"}}, 1.0},
        {"$0 was founded by $1 .", {"organization", "person"}, {{0, 1, "founded by"}}, 1.0},
        {"$0 of $1 was born in $2 .",
         {"person", "organization", "city"},
         {{0, 1, "works for"}, {0, 2, "born in"}},
         0.5},
        {"$0 unveiled $1 on $2 .", {"organization", "product", "date"}, {}, 0.5},
        {"$0 visited $1 .", {"person", "city"}, {}, 0.5},
    };
    g.seed = 0;
    return g;
}

/// Samples `size` sentences. Deterministic: the same (spec, size) pair always
/// produces the same corpus, already in the dataset schema.
inline std::vector<AnnotatedExample> generate_corpus(const GrammarSpec& spec, int size) {
    if (size < 1)
        throw ConfigError("generate_corpus: size must be >= 1");
    spec.validate();

    std::mt19937 rng(spec.seed);
    std::vector<double> weights;
    weights.reserve(spec.templates.size());
    for (const SentenceTemplate& tpl : spec.templates)
        weights.push_back(tpl.weight);
    std::discrete_distribution<std::size_t> pick_template(weights.begin(), weights.end());

    std::vector<AnnotatedExample> corpus;
    corpus.reserve(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) {
        const SentenceTemplate& tpl = spec.templates[pick_template(rng)];
        AnnotatedExample ex;
        // entity index each slot resolved to, in pattern order
        std::vector<int> slot_entity(tpl.slot_types.size(), -1);
        for (const std::string& token : detail::split_words(tpl.pattern)) {
            int slot = detail::slot_index(token);
            if (slot < 0) {
                ex.tokens.push_back(token);
                continue;
            }
            const std::string& type = tpl.slot_types[static_cast<std::size_t>(slot)];
            const EntityTypeDef* def = nullptr;
            for (const EntityTypeDef& t : spec.entity_types)
                if (t.label == type)
                    def = &t;
            std::uniform_int_distribution<std::size_t> pick_surface(0, def->surfaces.size() - 1);
            const std::vector<std::string> words =
                detail::split_words(def->surfaces[pick_surface(rng)]);
            const int start = static_cast<int>(ex.tokens.size());
            ex.tokens.insert(ex.tokens.end(), words.begin(), words.end());
            slot_entity[static_cast<std::size_t>(slot)] =
                static_cast<int>(ex.gold_entities.size());
            ex.gold_entities.push_back(
                {start, start + static_cast<int>(words.size()) - 1, type});
        }
        for (const TemplateRelation& rel : tpl.relations)
            ex.gold_relations.push_back({slot_entity[static_cast<std::size_t>(rel.head_slot)],
                                         slot_entity[static_cast<std::size_t>(rel.tail_slot)],
                                         rel.label});
        validate_example(ex);
        corpus.push_back(std::move(ex));
    }
    return corpus;
}

inline nlohmann::json grammar_to_json(const GrammarSpec& g) {
    nlohmann::json j;
    j["entity_types"] = nlohmann::json::array();
    for (const EntityTypeDef& t : g.entity_types)
        j["entity_types"].push_back({{"label", t.label}, {"surfaces", t.surfaces}});
    j["relations"] = nlohmann::json::array();
    for (const RelationDef& r : g.relations)
        j["relations"].push_back({{"label", r.label},
                                  {"head_type", r.head_type},
                                  {"tail_type", r.tail_type},
                                  {"paraphrase", r.paraphrase}});
    j["templates"] = nlohmann::json::array();
    for (const SentenceTemplate& tpl : g.templates) {
        nlohmann::json rels = nlohmann::json::array();
        for (const TemplateRelation& rel : tpl.relations)
            rels.push_back(
                {{"head_slot", rel.head_slot}, {"tail_slot", rel.tail_slot}, {"label", rel.label}});
        j["templates"].push_back({{"pattern", tpl.pattern},
                                  {"slot_types", tpl.slot_types},
                                  {"relations", rels},
                                  {"weight", tpl.weight}});
    }
    j["seed"] = g.seed;
    return j;
}

inline GrammarSpec grammar_from_json(const nlohmann::json& j) {
    if (!j.is_object())
        throw ParseError("grammar spec must be a JSON object");
    GrammarSpec g;
    try {
        for (const auto& t : j.at("entity_types")) {
            EntityTypeDef def;
            def.label = t.at("label").get<std::string>();
            def.surfaces = t.at("surfaces").get<std::vector<std::string>>();
            g.entity_types.push_back(std::move(def));
        }
        for (const auto& r : j.value("relations", nlohmann::json::array())) {
            RelationDef def;
            def.label = r.at("label").get<std::string>();
            def.head_type = r.at("head_type").get<std::string>();
            def.tail_type = r.at("tail_type").get<std::string>();
            def.paraphrase = r.value("paraphrase", std::string());
            g.relations.push_back(std::move(def));
        }
        for (const auto& t : j.at("templates")) {
            SentenceTemplate tpl;
            tpl.pattern = t.at("pattern").get<std::string>();
            tpl.slot_types = t.at("slot_types").get<std::vector<std::string>>();
            for (const auto& rel : t.value("relations", nlohmann::json::array()))
                tpl.relations.push_back({rel.at("head_slot").get<int>(),
                                         rel.at("tail_slot").get<int>(),
                                         rel.at("label").get<std::string>()});
            tpl.weight = t.value("weight", 1.0);
            g.templates.push_back(std::move(tpl));
        }
        g.seed = j.value("seed", 0u);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("grammar spec: ") + e.what());
    }
    g.validate();
    return g;
}

inline GrammarSpec load_grammar(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open grammar spec: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("grammar spec: ") + e.what());
    }
    return grammar_from_json(j);
}

} // namespace relex
