#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "relex/dataset.hpp"
#include "relex/eval.hpp"

using namespace relex;

namespace {

AnnotatedExample make_example(int tokens,
                              const std::vector<std::tuple<int, int, std::string>>& entities,
                              const std::vector<std::tuple<int, int, std::string>>& relations) {
    AnnotatedExample ex;
    for (int i = 0; i < tokens; ++i)
        ex.tokens.push_back("w" + std::to_string(i));
    for (const auto& [start, end, label] : entities)
        ex.gold_entities.push_back({start, end, label});
    for (const auto& [head, tail, label] : relations)
        ex.gold_relations.push_back({head, tail, label});
    return ex;
}

Entity pred_entity(int start, int end, int type_index) {
    Entity e;
    e.span = {start, end};
    e.type_index = type_index;
    e.score = 0.9;
    return e;
}

RelationTriplet pred_relation(int hs, int he, int ts, int te, int relation_index,
                              int head_type = 0, int tail_type = 0) {
    RelationTriplet t;
    t.head = pred_entity(hs, he, head_type);
    t.tail = pred_entity(ts, te, tail_type);
    t.relation_index = relation_index;
    t.score = 0.8;
    return t;
}

struct Counts {
    long long tp = 0, fp = 0, fn = 0;
};

// Greedy first-match oracle with explicit used flags; for exact-key matching
// this attains the maximum matching, independently of the map-based code.
Counts oracle_relation_counts(const std::vector<RelationTriplet>& preds,
                              const AnnotatedExample& ex,
                              const std::vector<std::string>& relation_labels) {
    std::vector<bool> used(ex.gold_relations.size(), false);
    Counts c;
    for (const RelationTriplet& p : preds) {
        bool matched = false;
        for (std::size_t j = 0; j < ex.gold_relations.size(); ++j) {
            if (used[j])
                continue;
            const GoldRelation& g = ex.gold_relations[j];
            const GoldEntity& gh = ex.gold_entities[static_cast<std::size_t>(g.head)];
            const GoldEntity& gt = ex.gold_entities[static_cast<std::size_t>(g.tail)];
            if (gh.start == p.head.span.start && gh.end == p.head.span.end &&
                gt.start == p.tail.span.start && gt.end == p.tail.span.end &&
                g.label == relation_labels.at(static_cast<std::size_t>(p.relation_index))) {
                used[j] = true;
                matched = true;
                break;
            }
        }
        matched ? ++c.tp : ++c.fp;
    }
    for (bool u : used)
        if (!u)
            ++c.fn;
    return c;
}

Counts oracle_entity_counts(const std::vector<Entity>& preds, const AnnotatedExample& ex,
                            const std::vector<std::string>& entity_labels) {
    std::vector<bool> used(ex.gold_entities.size(), false);
    Counts c;
    for (const Entity& p : preds) {
        bool matched = false;
        for (std::size_t j = 0; j < ex.gold_entities.size(); ++j) {
            if (used[j])
                continue;
            const GoldEntity& g = ex.gold_entities[j];
            if (g.start == p.span.start && g.end == p.span.end &&
                g.label == entity_labels.at(static_cast<std::size_t>(p.type_index))) {
                used[j] = true;
                matched = true;
                break;
            }
        }
        matched ? ++c.tp : ++c.fp;
    }
    for (bool u : used)
        if (!u)
            ++c.fn;
    return c;
}

} // namespace

TEST_CASE("dataset: single record parses into an annotated example") {
    std::istringstream in(
        R"({"tokens": ["Ada", "Lovelace", "joined", "Acme"], )"
        R"("entities": [{"start": 0, "end": 1, "label": "person"}, )"
        R"({"start": 3, "end": 3, "label": "organization"}], )"
        R"("relations": [{"head": 0, "tail": 1, "label": "works for"}]})");
    auto data = read_jsonl(in);
    REQUIRE(data.size() == 1);
    const AnnotatedExample& ex = data[0];
    REQUIRE(ex.tokens == std::vector<std::string>{"Ada", "Lovelace", "joined", "Acme"});
    REQUIRE(ex.gold_entities.size() == 2);
    CHECK(ex.gold_entities[0] == GoldEntity{0, 1, "person"});
    CHECK(ex.gold_entities[1] == GoldEntity{3, 3, "organization"});
    REQUIRE(ex.gold_relations.size() == 1);
    CHECK(ex.gold_relations[0] == GoldRelation{0, 1, "works for"});
}

TEST_CASE("dataset: empty input and blank lines") {
    std::istringstream empty("");
    CHECK(read_jsonl(empty).empty());

    std::istringstream blanks(
        "\n  \t\n"
        R"({"tokens": ["a"], "entities": [], "relations": []})"
        "\n\n");
    CHECK(read_jsonl(blanks).size() == 1);
}

TEST_CASE("dataset: malformed records carry their line number") {
    const std::string good = R"({"tokens": ["a"], "entities": [], "relations": []})";

    SECTION("invalid JSON") {
        std::istringstream in(good + "\n{not json\n");
        try {
            read_jsonl(in);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == 2);
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
    SECTION("dangling relation endpoint") {
        std::istringstream in(
            good + "\n" + good + "\n" +
            R"({"tokens": ["a", "b", "c"], )"
            R"("entities": [{"start": 0, "end": 0, "label": "x"}, {"start": 1, "end": 1, "label": "y"}], )"
            R"("relations": [{"head": 0, "tail": 5, "label": "r"}]})");
        try {
            read_jsonl(in);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == 3);
            CHECK(std::string(e.what()).find("dangling") != std::string::npos);
        }
    }
    SECTION("span out of bounds") {
        for (const char* span : {R"("start": 0, "end": 3)", R"("start": -1, "end": 0)",
                                 R"("start": 2, "end": 1)"}) {
            std::istringstream in(R"({"tokens": ["a", "b", "c"], "entities": [{)" +
                                  std::string(span) + R"(, "label": "x"}], "relations": []})");
            CHECK_THROWS_AS(read_jsonl(in), ParseError);
        }
    }
    SECTION("missing or mistyped fields") {
        for (const char* bad :
             {R"({"entities": [], "relations": []})",
              R"({"tokens": "a b", "entities": [], "relations": []})",
              R"({"tokens": [1, 2], "entities": [], "relations": []})",
              R"({"tokens": ["a"], "entities": [{"start": 0, "label": "x"}], "relations": []})",
              R"({"tokens": ["a"], "entities": [{"start": 0, "end": 0.5, "label": "x"}], "relations": []})",
              R"({"tokens": ["a"], "entities": [], "relations": [{"head": 0, "tail": 0}]})",
              R"([1, 2, 3])"}) {
            std::istringstream in(bad);
            CHECK_THROWS_AS(read_jsonl(in), ParseError);
        }
    }
}

TEST_CASE("dataset: jsonl round-trip preserves every field") {
    std::vector<AnnotatedExample> data;
    data.push_back(make_example(6,
                                {{0, 1, "person"}, {3, 5, "organization"}},
                                {{0, 1, "works for"}, {1, 0, "founded by"}}));
    data.push_back(make_example(3, {{2, 2, "city"}}, {}));
    data.push_back(make_example(1, {}, {}));

    std::ostringstream out;
    write_jsonl(out, data);
    std::istringstream in(out.str());
    CHECK(read_jsonl(in) == data);

    const std::string path = "/tmp/relex_test_dataset.jsonl";
    save_dataset(path, data);
    CHECK(load_dataset(path) == data);
    std::remove(path.c_str());

    CHECK_THROWS_AS(load_dataset("/tmp/relex_no_such_file.jsonl"), ParseError);
}

TEST_CASE("dataset: label inventories are sorted and deduplicated") {
    std::vector<AnnotatedExample> data;
    data.push_back(make_example(4, {{0, 0, "person"}, {1, 1, "city"}}, {{0, 1, "born in"}}));
    data.push_back(make_example(4, {{0, 0, "person"}, {1, 1, "organization"}},
                                {{0, 1, "works for"}, {1, 0, "born in"}}));
    CHECK(entity_label_inventory(data) ==
          std::vector<std::string>{"city", "organization", "person"});
    CHECK(relation_label_inventory(data) == std::vector<std::string>{"born in", "works for"});
}

TEST_CASE("micro_f1_relations: frozen confusion counts") {
    const std::vector<std::string> rel_labels{"works for", "born in", "located in"};
    AnnotatedExample ex = make_example(
        10, {{0, 1, "person"}, {3, 4, "organization"}, {6, 6, "city"}},
        {{0, 1, "works for"}, {0, 2, "born in"}, {1, 2, "located in"}});

    std::vector<RelationTriplet> preds{
        pred_relation(0, 1, 3, 4, 0), // matches gold 0
        pred_relation(0, 1, 6, 6, 1), // matches gold 1
        pred_relation(3, 4, 6, 6, 0), // wrong label for gold 2
    };
    MetricsReport report = micro_f1_relations({preds}, {ex}, rel_labels);
    CHECK(report.relations.true_positives == 2);
    CHECK(report.relations.false_positives == 1);
    CHECK(report.relations.false_negatives == 1);
    CHECK_THAT(report.relations.precision, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
    CHECK_THAT(report.relations.recall, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
    CHECK_THAT(report.relations.f1, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));

    SECTION("zero predictions give zero recall and f1") {
        MetricsReport none = micro_f1_relations({{}}, {ex}, rel_labels);
        CHECK(none.relations.true_positives == 0);
        CHECK(none.relations.false_negatives == 3);
        CHECK(none.relations.precision == 0.0);
        CHECK(none.relations.recall == 0.0);
        CHECK(none.relations.f1 == 0.0);
    }
}

TEST_CASE("micro_f1_relations: each gold triplet is claimed at most once") {
    const std::vector<std::string> rel_labels{"works for"};
    AnnotatedExample ex = make_example(5, {{0, 0, "person"}, {2, 2, "organization"}},
                                       {{0, 1, "works for"}});
    std::vector<RelationTriplet> preds{pred_relation(0, 0, 2, 2, 0),
                                       pred_relation(0, 0, 2, 2, 0)};
    MetricsReport report = micro_f1_relations({preds}, {ex}, rel_labels);
    CHECK(report.relations.true_positives == 1);
    CHECK(report.relations.false_positives == 1);
    CHECK(report.relations.false_negatives == 0);
}

TEST_CASE("micro_f1_relations: matches never cross example boundaries") {
    const std::vector<std::string> rel_labels{"works for"};
    AnnotatedExample ex0 = make_example(5, {}, {});
    AnnotatedExample ex1 = make_example(5, {{0, 0, "person"}, {2, 2, "organization"}},
                                        {{0, 1, "works for"}});
    // the only prediction sits in example 0 but would match example 1's gold
    MetricsReport report =
        micro_f1_relations({{pred_relation(0, 0, 2, 2, 0)}, {}}, {ex0, ex1}, rel_labels);
    CHECK(report.relations.true_positives == 0);
    CHECK(report.relations.false_positives == 1);
    CHECK(report.relations.false_negatives == 1);
}

TEST_CASE("micro_f1_relations: entity-type agreement flag") {
    const std::vector<std::string> rel_labels{"works for"};
    const std::vector<std::string> ent_labels{"person", "organization"};
    AnnotatedExample ex = make_example(5, {{0, 0, "person"}, {2, 2, "organization"}},
                                       {{0, 1, "works for"}});
    // spans and relation label right, but head typed organization
    std::vector<RelationTriplet> preds{pred_relation(0, 0, 2, 2, 0, 1, 1)};

    MetricsReport loose = micro_f1_relations({preds}, {ex}, rel_labels);
    CHECK(loose.relations.true_positives == 1);

    MetricsReport strict = micro_f1_relations({preds}, {ex}, rel_labels, ent_labels, true);
    CHECK(strict.relations.true_positives == 0);
    CHECK(strict.relations.false_positives == 1);
    CHECK(strict.relations.false_negatives == 1);

    std::vector<RelationTriplet> typed{pred_relation(0, 0, 2, 2, 0, 0, 1)};
    MetricsReport fixed = micro_f1_relations({typed}, {ex}, rel_labels, ent_labels, true);
    CHECK(fixed.relations.true_positives == 1);
}

TEST_CASE("entity_f1: strict boundaries and labels") {
    const std::vector<std::string> ent_labels{"person", "organization"};
    AnnotatedExample ex =
        make_example(6, {{0, 1, "person"}, {3, 4, "organization"}}, {});

    SECTION("identical predictions score 1") {
        std::vector<Entity> preds{pred_entity(0, 1, 0), pred_entity(3, 4, 1)};
        MetricsReport report = entity_f1({preds}, {ex}, ent_labels);
        CHECK(report.entities.f1 == 1.0);
        CHECK(report.entities.precision == 1.0);
        CHECK(report.entities.recall == 1.0);
    }
    SECTION("off-by-one boundary is a false positive and a false negative") {
        std::vector<Entity> preds{pred_entity(0, 2, 0), pred_entity(3, 4, 1)};
        MetricsReport report = entity_f1({preds}, {ex}, ent_labels);
        CHECK(report.entities.true_positives == 1);
        CHECK(report.entities.false_positives == 1);
        CHECK(report.entities.false_negatives == 1);
    }
    SECTION("wrong label on the right span is a miss") {
        std::vector<Entity> preds{pred_entity(0, 1, 1)};
        MetricsReport report = entity_f1({preds}, {ex}, ent_labels);
        CHECK(report.entities.true_positives == 0);
        CHECK(report.entities.false_positives == 1);
        CHECK(report.entities.false_negatives == 2);
    }
}

TEST_CASE("metrics: random examples match the brute-force oracle") {
    const std::vector<std::string> rel_labels{"works for", "born in"};
    const std::vector<std::string> ent_labels{"person", "organization", "city"};
    std::mt19937 rng(2024);
    std::uniform_int_distribution<int> coin(0, 1);

    for (int trial = 0; trial < 20; ++trial) {
        AnnotatedExample ex;
        const int tokens = 8;
        for (int i = 0; i < tokens; ++i)
            ex.tokens.push_back("w" + std::to_string(i));
        std::uniform_int_distribution<int> ent_count(1, 4);
        const int n_ent = ent_count(rng);
        std::uniform_int_distribution<int> start_dist(0, 5);
        std::uniform_int_distribution<int> len_dist(0, 1);
        std::uniform_int_distribution<int> ent_label(0, 2);
        for (int i = 0; i < n_ent; ++i) {
            int s = start_dist(rng);
            ex.gold_entities.push_back({s, s + len_dist(rng),
                                        ent_labels[static_cast<std::size_t>(ent_label(rng))]});
        }
        std::uniform_int_distribution<int> rel_count(0, 3);
        std::uniform_int_distribution<int> ent_index(0, n_ent - 1);
        std::uniform_int_distribution<int> rel_label(0, 1);
        const int n_rel = rel_count(rng);
        for (int i = 0; i < n_rel; ++i)
            ex.gold_relations.push_back({ent_index(rng), ent_index(rng),
                                         rel_labels[static_cast<std::size_t>(rel_label(rng))]});

        // predictions: a subset of gold copies plus noise at token 7 (never gold)
        std::vector<RelationTriplet> rel_preds;
        for (const GoldRelation& g : ex.gold_relations) {
            if (coin(rng)) {
                const GoldEntity& h = ex.gold_entities[static_cast<std::size_t>(g.head)];
                const GoldEntity& t = ex.gold_entities[static_cast<std::size_t>(g.tail)];
                int ri = g.label == rel_labels[0] ? 0 : 1;
                rel_preds.push_back(pred_relation(h.start, h.end, t.start, t.end, ri));
            }
        }
        for (int i = coin(rng) + coin(rng); i > 0; --i)
            rel_preds.push_back(pred_relation(7, 7, 7, 7, rel_label(rng)));
        std::shuffle(rel_preds.begin(), rel_preds.end(), rng);

        std::vector<Entity> ent_preds;
        for (const GoldEntity& g : ex.gold_entities) {
            if (coin(rng)) {
                int ti = static_cast<int>(std::find(ent_labels.begin(), ent_labels.end(),
                                                    g.label) -
                                          ent_labels.begin());
                ent_preds.push_back(pred_entity(g.start, g.end, ti));
            }
        }
        for (int i = coin(rng); i > 0; --i)
            ent_preds.push_back(pred_entity(7, 7, ent_label(rng)));
        std::shuffle(ent_preds.begin(), ent_preds.end(), rng);

        INFO("trial " << trial);
        Counts rc = oracle_relation_counts(rel_preds, ex, rel_labels);
        MetricsReport rr = micro_f1_relations({rel_preds}, {ex}, rel_labels);
        CHECK(rr.relations.true_positives == rc.tp);
        CHECK(rr.relations.false_positives == rc.fp);
        CHECK(rr.relations.false_negatives == rc.fn);

        Counts ec = oracle_entity_counts(ent_preds, ex, ent_labels);
        MetricsReport er = entity_f1({ent_preds}, {ex}, ent_labels);
        CHECK(er.entities.true_positives == ec.tp);
        CHECK(er.entities.false_positives == ec.fp);
        CHECK(er.entities.false_negatives == ec.fn);

        // a correct addition (an unmatched gold copy) never lowers f1
        if (rc.fn > 0) {
            std::vector<bool> used(ex.gold_relations.size(), false);
            Counts probe; // recompute used flags to find an unmatched gold
            for (const RelationTriplet& p : rel_preds) {
                for (std::size_t j = 0; j < ex.gold_relations.size(); ++j) {
                    if (used[j])
                        continue;
                    const GoldRelation& g = ex.gold_relations[j];
                    const GoldEntity& h = ex.gold_entities[static_cast<std::size_t>(g.head)];
                    const GoldEntity& t = ex.gold_entities[static_cast<std::size_t>(g.tail)];
                    if (h.start == p.head.span.start && h.end == p.head.span.end &&
                        t.start == p.tail.span.start && t.end == p.tail.span.end &&
                        g.label == rel_labels[static_cast<std::size_t>(p.relation_index)]) {
                        used[j] = true;
                        break;
                    }
                }
            }
            (void)probe;
            for (std::size_t j = 0; j < used.size(); ++j) {
                if (!used[j]) {
                    const GoldRelation& g = ex.gold_relations[j];
                    const GoldEntity& h = ex.gold_entities[static_cast<std::size_t>(g.head)];
                    const GoldEntity& t = ex.gold_entities[static_cast<std::size_t>(g.tail)];
                    auto better = rel_preds;
                    better.push_back(pred_relation(h.start, h.end, t.start, t.end,
                                                   g.label == rel_labels[0] ? 0 : 1));
                    double f1_before = rr.relations.f1;
                    double f1_after =
                        micro_f1_relations({better}, {ex}, rel_labels).relations.f1;
                    CHECK(f1_after >= f1_before - 1e-12);
                    break;
                }
            }
        }
        // an incorrect addition never raises f1
        auto worse = rel_preds;
        worse.push_back(pred_relation(7, 7, 7, 7, 0));
        double f1_noise = micro_f1_relations({worse}, {ex}, rel_labels).relations.f1;
        CHECK(f1_noise <= rr.relations.f1 + 1e-12);
        CHECK(rr.relations.f1 >= 0.0);
        CHECK(rr.relations.f1 <= 1.0);
    }
}

TEST_CASE("metrics: permutation invariance over examples") {
    const std::vector<std::string> rel_labels{"works for", "born in"};
    const std::vector<std::string> ent_labels{"person", "city"};
    std::vector<AnnotatedExample> gold;
    std::vector<std::vector<RelationTriplet>> rel_preds;
    std::vector<std::vector<Entity>> ent_preds;

    gold.push_back(make_example(5, {{0, 0, "person"}, {2, 2, "city"}}, {{0, 1, "born in"}}));
    rel_preds.push_back({pred_relation(0, 0, 2, 2, 1)});
    ent_preds.push_back({pred_entity(0, 0, 0)});

    gold.push_back(make_example(4, {{1, 2, "person"}}, {}));
    rel_preds.push_back({pred_relation(1, 2, 1, 2, 0)});
    ent_preds.push_back({pred_entity(1, 2, 1), pred_entity(0, 0, 0)});

    gold.push_back(make_example(6, {{0, 1, "city"}, {3, 3, "city"}}, {{0, 1, "works for"}}));
    rel_preds.push_back({});
    ent_preds.push_back({pred_entity(0, 1, 1)});

    MetricsReport forward = evaluate_extractions(ent_preds, rel_preds, gold, ent_labels,
                                                 rel_labels);
    std::reverse(gold.begin(), gold.end());
    std::reverse(rel_preds.begin(), rel_preds.end());
    std::reverse(ent_preds.begin(), ent_preds.end());
    MetricsReport backward = evaluate_extractions(ent_preds, rel_preds, gold, ent_labels,
                                                  rel_labels);

    CHECK(forward.relations.true_positives == backward.relations.true_positives);
    CHECK(forward.relations.false_positives == backward.relations.false_positives);
    CHECK(forward.relations.false_negatives == backward.relations.false_negatives);
    CHECK(forward.relations.f1 == backward.relations.f1);
    CHECK(forward.entities.f1 == backward.entities.f1);
    CHECK(forward.entity_support == backward.entity_support);
    CHECK(forward.relation_support == backward.relation_support);
}

TEST_CASE("metrics: misaligned and out-of-range inputs are contract violations") {
    AnnotatedExample ex = make_example(3, {{0, 0, "x"}}, {});
    CHECK_THROWS_AS(micro_f1_relations({{}, {}}, {ex}, {"r"}), ContractError);
    CHECK_THROWS_AS(entity_f1({}, {ex}, {"x"}), ContractError);
    CHECK_THROWS_AS(entity_f1({{pred_entity(0, 0, 3)}}, {ex}, {"x"}), ContractError);
    CHECK_THROWS_AS(micro_f1_relations({{pred_relation(0, 0, 0, 0, 2)}}, {ex}, {"r"}),
                    ContractError);
}

TEST_CASE("metrics: support counts and report rendering") {
    std::vector<AnnotatedExample> gold;
    gold.push_back(make_example(6, {{0, 0, "person"}, {2, 3, "person"}, {5, 5, "city"}},
                                {{0, 2, "born in"}, {1, 2, "born in"}}));
    gold.push_back(make_example(4, {{0, 1, "city"}}, {}));

    MetricsReport report = evaluate_extractions({{}, {}}, {{}, {}}, gold,
                                                {"city", "person"}, {"born in"});
    REQUIRE(report.entity_support.size() == 2);
    CHECK(report.entity_support.at("person") == 2);
    CHECK(report.entity_support.at("city") == 2);
    REQUIRE(report.relation_support.size() == 1);
    CHECK(report.relation_support.at("born in") == 2);

    std::string table = report.table();
    CHECK(table.find("micro-f1") != std::string::npos);
    CHECK(table.find("entities") != std::string::npos);
    CHECK(table.find("relations") != std::string::npos);
    CHECK(table.find("born in") != std::string::npos);

    nlohmann::json j = report.to_json();
    CHECK(j["relations"]["micro_f1"].get<double>() == 0.0);
    CHECK(j["relations"]["fn"].get<long long>() == 2);
    CHECK(j["entities"]["fn"].get<long long>() == 4);
    CHECK(j["entity_support"]["person"].get<long long>() == 2);
}
