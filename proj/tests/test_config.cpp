#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <string>

#include "relex/config.hpp"

using namespace relex;

TEST_CASE("paper defaults carry the published hyperparameters") {
    Config cfg = paper_defaults();
    REQUIRE_NOTHROW(cfg.validate());

    CHECK(cfg.encoder.backbone == "deberta-v3-large");
    CHECK(cfg.encoder.max_words == 2048);
    CHECK(cfg.encoder.bilstm_hidden == 1024);
    CHECK(cfg.span.max_width == 12);
    CHECK(cfg.pair.strategy == "all_pairs");
    CHECK(cfg.pair.adjacency_decoder == "none");
    CHECK(cfg.loss.alpha == 0.75);
    CHECK(cfg.loss.gamma == 0.0);
    CHECK(cfg.loss.lambda_entity == 1.0);
    CHECK(cfg.loss.lambda_adjacency == 0.0);
    CHECK(cfg.loss.lambda_relation == 1.0);
    CHECK(cfg.stage1.optimizer == "adamw");
    CHECK(cfg.stage1.encoder_lr == 1e-5);
    CHECK(cfg.stage1.head_lr == 5e-5);
    CHECK(cfg.stage1.warmup_ratio == 0.05);
    CHECK(cfg.stage1.batch_size == 8);
    CHECK(cfg.stage1.epochs == 1);
    CHECK(cfg.stage2.optimizer == "adamw");
    CHECK(cfg.stage2.encoder_lr == 3e-6);
    CHECK(cfg.stage2.head_lr == 5e-6);
    CHECK(cfg.stage2.warmup_ratio == 0.05);
    CHECK(cfg.stage2.batch_size == 8);
    CHECK(cfg.stage2.epochs == 5);
    CHECK(cfg.inference.entity_threshold == 0.3);
    CHECK(cfg.inference.relation_threshold == 0.5);
}

TEST_CASE("serialized defaults spell out each hyperparameter row") {
    std::string text = serialize_config(paper_defaults());
    for (const char* row :
         {"backbone = deberta-v3-large", "max_words = 2048", "bilstm_hidden = 1024",
          "max_width = 12", "strategy = all_pairs", "adjacency_decoder = none",
          "focal_alpha = 0.75", "focal_gamma = 0", "lambda_entity = 1", "lambda_adjacency = 0",
          "lambda_relation = 1", "optimizer = adamw", "encoder_lr = 1e-05", "head_lr = 5e-05",
          "warmup_ratio = 0.05", "batch_size = 8", "epochs = 1", "encoder_lr = 3e-06",
          "head_lr = 5e-06", "epochs = 5", "entity_threshold = 0.3",
          "relation_threshold = 0.5"}) {
        INFO("missing row: " << row);
        CHECK(text.find(row) != std::string::npos);
    }
}

TEST_CASE("serialize-parse-serialize is byte identical") {
    auto round_trip = [](const Config& cfg) {
        std::string first = serialize_config(cfg);
        Config parsed = parse_config(first);
        CHECK(parsed == cfg);
        CHECK(serialize_config(parsed) == first);
    };
    round_trip(paper_defaults());
    round_trip(toy_defaults());

    Config custom = toy_defaults();
    custom.loss.gamma = 2.0;
    custom.pair.strategy = "adjacency";
    custom.pair.adjacency_decoder = "gcn";
    custom.pair.threshold = 0.35;
    custom.relation.scorer = "translational";
    custom.encoder.aggregation = "mean";
    custom.inference.flat_ner = true;
    custom.stage2.weight_decay = 0.01;
    REQUIRE_NOTHROW(custom.validate());
    round_trip(custom);
}

TEST_CASE("partial configs resolve against the defaults") {
    Config cfg = parse_config("# comment line\n"
                              "[loss]\n"
                              "focal_gamma = 2 ; trailing comment\n"
                              "\n"
                              "[inference]\n"
                              "entity_threshold=0.25\n");
    CHECK(cfg.loss.gamma == 2.0);
    CHECK(cfg.inference.entity_threshold == 0.25);
    // untouched keys keep the documented defaults
    CHECK(cfg.loss.alpha == 0.75);
    CHECK(cfg.stage2.epochs == 5);

    Config toy = parse_config("[loss]\nfocal_gamma = 1\n", toy_defaults());
    CHECK(toy.encoder.backbone == "toy");
    CHECK(toy.loss.gamma == 1.0);
}

TEST_CASE("toy defaults scale the learning rates for the small backbone") {
    Config cfg = toy_defaults();
    REQUIRE_NOTHROW(cfg.validate());
    CHECK(cfg.encoder.backbone == "toy");
    CHECK(cfg.stage1.head_lr == 1e-3);
    CHECK(cfg.stage1.encoder_lr == 1e-4);
    CHECK(cfg.stage2.head_lr == 1e-3);
    CHECK(cfg.stage2.encoder_lr == 1e-4);
    // shared schedule shape with the published recipe
    CHECK(cfg.stage1.warmup_ratio == 0.05);
    CHECK(cfg.stage1.epochs == 1);
    CHECK(cfg.stage2.epochs == 5);
}

TEST_CASE("config files round-trip through disk") {
    const std::string path = "/tmp/relex_test_config.ini";
    Config cfg = toy_defaults();
    cfg.loss.gamma = 0.5;
    save_config(path, cfg);
    CHECK(load_config(path) == cfg);
    std::remove(path.c_str());

    CHECK_THROWS_AS(load_config("/tmp/relex_no_such_config.ini"), ParseError);
}

TEST_CASE("config parse errors carry line numbers") {
    try {
        parse_config("[loss]\nfocal_delta = 1\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(parse_config("[nonsense]\nx = 1\n"), ParseError);
    CHECK_THROWS_AS(parse_config("[loss\nfocal_gamma = 1\n"), ParseError);
    CHECK_THROWS_AS(parse_config("[loss]\nfocal_gamma 1\n"), ParseError);
    CHECK_THROWS_AS(parse_config("focal_gamma = 1\n"), ParseError);
    CHECK_THROWS_AS(parse_config("[loss]\nfocal_gamma = fast\n"), ParseError);
    CHECK_THROWS_AS(parse_config("[encoder]\ndim = 4.5\n"), ParseError);
    CHECK_THROWS_AS(parse_config("[encoder]\nbilstm = yes\n"), ParseError);
    CHECK_THROWS_AS(parse_config("[loss]\n= 1\n"), ParseError);
}

TEST_CASE("config validation rejects inconsistent settings") {
    auto broken = [](auto mutate) {
        Config cfg = toy_defaults();
        mutate(cfg);
        return cfg;
    };
    CHECK_THROWS_AS(broken([](Config& c) { c.encoder.heads = 3; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](Config& c) { c.encoder.max_words = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](Config& c) { c.encoder.vocab_size = 3; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](Config& c) { c.encoder.bilstm_hidden = 0; }).validate(),
                    ConfigError);
    CHECK_THROWS_AS(broken([](Config& c) { c.encoder.aggregation = "middle"; }).validate(),
                    ConfigError);
    CHECK_THROWS_AS(broken([](Config& c) { c.span.max_width = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](Config& c) { c.pair.strategy = "some"; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](Config& c) { c.pair.strategy = "adjacency"; }).validate(),
                    ConfigError);
    CHECK_THROWS_AS(broken([](Config& c) { c.pair.adjacency_decoder = "magic"; }).validate(),
                    ConfigError);
    CHECK_THROWS_AS(broken([](Config& c) { c.pair.threshold = 1.5; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](Config& c) { c.relation.scorer = "rotational"; }).validate(),
                    ConfigError);
    CHECK_THROWS_AS(broken([](Config& c) { c.relation.dropout = 1.0; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](Config& c) { c.loss.alpha = 1.0; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](Config& c) { c.stage1.encoder_lr = -1e-5; }).validate(),
                    ConfigError);
    CHECK_THROWS_AS(broken([](Config& c) { c.stage1.warmup_ratio = 1.0; }).validate(),
                    ConfigError);
    CHECK_THROWS_AS(broken([](Config& c) { c.stage2.batch_size = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](Config& c) { c.stage2.epochs = -1; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](Config& c) { c.stage1.optimizer = "sgd"; }).validate(),
                    ConfigError);
    CHECK_THROWS_AS(broken([](Config& c) { c.inference.relation_threshold = 1.0; }).validate(),
                    ConfigError);
}
