// Integration tests driving the command-line binary end to end.

#include <catch2/catch_amalgamated.hpp>

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "relex/eval.hpp"
#include "relex/model.hpp"

using nlohmann::json;
using namespace relex;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

CliResult run_cli(const std::string& args) {
    static int counter = 0;
    std::string err_path = "/tmp/relex_cli_stderr_" + std::to_string(counter++) + ".txt";
    std::string cmd = std::string(RELEX_BIN_PATH) + " " + args + " 2>" + err_path;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CliResult result;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) result.out.append(buf, n);
    int status = pclose(pipe);
    result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    result.err = slurp(err_path);
    std::remove(err_path.c_str());
    return result;
}

std::vector<json> parse_jsonl(const std::string& text) {
    std::vector<json> records;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) records.push_back(json::parse(line));
    return records;
}

const char* kSmallConfig = R"(
[encoder]
backbone = toy
dim = 32
layers = 1
heads = 2
bilstm_hidden = 16

[span]
width_embedding_dim = 8

[stage1]
encoder_lr = 1e-04
head_lr = 0.001
warmup_ratio = 0.1
batch_size = 4
epochs = 2

[stage2]
encoder_lr = 1e-04
head_lr = 0.001
warmup_ratio = 0
batch_size = 4
epochs = 2
)";

struct TrainedFixture {
    std::string config_path = "/tmp/relex_cli_fixture.ini";
    std::string data_path = "/tmp/relex_cli_fixture.jsonl";
    std::string ckpt_path = "/tmp/relex_cli_fixture.ckpt";
    std::string trace_path = "/tmp/relex_cli_fixture.ckpt.trace.csv";
    json train_summary;
};

const TrainedFixture& trained() {
    static TrainedFixture f = [] {
        TrainedFixture fx;
        {
            std::ofstream cfg(fx.config_path);
            cfg << kSmallConfig;
        }
        CliResult gen = run_cli("generate --size 24 --seed 13 --out " + fx.data_path);
        REQUIRE(gen.code == 0);
        CliResult tr = run_cli("train --config " + fx.config_path + " --data " +
                               fx.data_path + " --out " + fx.ckpt_path + " --seed 3");
        INFO(tr.err);
        REQUIRE(tr.code == 0);
        fx.train_summary = json::parse(tr.out);
        return fx;
    }();
    return f;
}

} // namespace

TEST_CASE("cli: generate writes the requested number of records") {
    std::string out = "/tmp/relex_cli_gen_a.jsonl";
    CliResult r = run_cli("generate --size 100 --seed 5 --out " + out);
    REQUIRE(r.code == 0);
    json summary = json::parse(r.out);
    CHECK(summary.at("examples").get<int>() == 100);

    std::vector<AnnotatedExample> reloaded = load_dataset(out);
    REQUIRE(reloaded.size() == 100);
    long long entities = 0, relations = 0;
    for (const auto& ex : reloaded) {
        entities += static_cast<long long>(ex.gold_entities.size());
        relations += static_cast<long long>(ex.gold_relations.size());
    }
    CHECK(summary.at("entities").get<long long>() == entities);
    CHECK(summary.at("relations").get<long long>() == relations);
    CHECK(r.err.find("command = generate") != std::string::npos);
    std::remove(out.c_str());
}

TEST_CASE("cli: generate is byte-identical under a fixed seed") {
    std::string a = "/tmp/relex_cli_gen_b1.jsonl";
    std::string b = "/tmp/relex_cli_gen_b2.jsonl";
    REQUIRE(run_cli("generate --size 40 --seed 9 --out " + a).code == 0);
    REQUIRE(run_cli("generate --size 40 --seed 9 --out " + b).code == 0);
    std::string da = slurp(a), db = slurp(b);
    CHECK(!da.empty());
    CHECK(da == db);
    CliResult other = run_cli("generate --size 40 --seed 10 --out " + a);
    REQUIRE(other.code == 0);
    CHECK(slurp(a) != db);
    std::remove(a.c_str());
    std::remove(b.c_str());
}

TEST_CASE("cli: generate rejects a missing grammar file") {
    CliResult r = run_cli(
        "generate --grammar /tmp/no_such_grammar.json --size 5 --out /tmp/x.jsonl");
    CHECK(r.code == 1);
    CHECK(r.err.find("error:") != std::string::npos);
}

TEST_CASE("cli: train dry run echoes published defaults without training") {
    const TrainedFixture& fx = trained();
    std::string ckpt = "/tmp/relex_cli_dry.ckpt";
    std::remove(ckpt.c_str());
    CliResult r = run_cli("train --data " + fx.data_path + " --out " + ckpt +
                          " --dry-run");
    REQUIRE(r.code == 0);
    // Stage-2 published values surface in the resolved config header
    CHECK(r.err.find("backbone = deberta-v3-large") != std::string::npos);
    CHECK(r.err.find("max_words = 2048") != std::string::npos);
    CHECK(r.err.find("encoder_lr = 3e-06") != std::string::npos);
    CHECK(r.err.find("head_lr = 5e-06") != std::string::npos);
    CHECK(r.err.find("entity_threshold = 0.3") != std::string::npos);
    json out = json::parse(r.out);
    CHECK(out.at("dry_run").get<bool>());
    CHECK(out.at("examples").get<int>() == 24);
    CHECK(slurp(ckpt).empty()); // nothing written
}

TEST_CASE("cli: train writes checkpoint plus loss trace") {
    const TrainedFixture& fx = trained();
    CHECK(fx.train_summary.at("checkpoint").get<std::string>() == fx.ckpt_path);
    CHECK(fx.train_summary.at("final_train_loss").get<double>() > 0.0);

    std::string trace = slurp(fx.trace_path);
    REQUIRE(!trace.empty());
    CHECK(trace.rfind("step,encoder_lr,head_lr,entity_loss,adjacency_loss,"
                      "relation_loss,total_loss\n",
                      0) == 0);
    int rows = 0;
    for (char c : trace)
        if (c == '\n') ++rows;
    CHECK(rows - 1 == fx.train_summary.at("steps").get<int>());
    // 24 examples, batch 4 → 6 steps per epoch, two stages of 2 epochs
    CHECK(fx.train_summary.at("steps").get<int>() == 24);
    // stage boundary keeps global step numbering monotonic
    std::istringstream in(trace);
    std::string line;
    std::getline(in, line);
    int expected_step = 1;
    while (std::getline(in, line)) {
        CHECK(line.rfind(std::to_string(expected_step) + ",", 0) == 0);
        ++expected_step;
    }
}

TEST_CASE("cli: checkpoint reloads and reproduces the recorded loss") {
    const TrainedFixture& fx = trained();
    Model model = Model::load(fx.ckpt_path);
    std::vector<AnnotatedExample> data = load_dataset(fx.data_path);
    std::vector<std::string> ents = entity_label_inventory(data);
    std::vector<std::string> rels = relation_label_inventory(data);
    double recorded = model.metadata().at("final_train_loss").get<double>();
    double replayed = model.eval_total_loss(data, ents, rels);
    CHECK_THAT(replayed, Catch::Matchers::WithinAbs(recorded, 1e-6));
    CHECK(recorded ==
          fx.train_summary.at("final_train_loss").get<double>());
}

TEST_CASE("cli: train surfaces bad inputs as user errors") {
    const TrainedFixture& fx = trained();
    CHECK(run_cli("train --data /tmp/no_such_data.jsonl --out /tmp/x.ckpt").code == 1);

    std::string empty_path = "/tmp/relex_cli_empty.jsonl";
    std::ofstream(empty_path).close();
    CHECK(run_cli("train --data " + empty_path + " --out /tmp/x.ckpt").code == 1);

    std::string bad_cfg = "/tmp/relex_cli_bad.ini";
    std::ofstream(bad_cfg) << "[encoder]\nmax_words = banana\n";
    CliResult r = run_cli("train --config " + bad_cfg + " --data " + fx.data_path +
                          " --out /tmp/x.ckpt");
    CHECK(r.code == 1);
    CHECK(r.err.find("line") != std::string::npos);
    std::remove(empty_path.c_str());
    std::remove(bad_cfg.c_str());
}

TEST_CASE("cli: extract emits one well-formed record per input") {
    const TrainedFixture& fx = trained();
    CliResult r = run_cli(
        "extract --checkpoint " + fx.ckpt_path +
        " 'Ada Lovelace works for Acme Corp .' --entity-label person"
        " --entity-label organization --relation-label 'works for'"
        " --threshold 0.1 --relation-threshold 0.1");
    REQUIRE(r.code == 0);
    std::vector<json> records = parse_jsonl(r.out);
    REQUIRE(records.size() == 1);
    const json& rec = records[0];
    CHECK(rec.at("text").get<std::string>() == "Ada Lovelace works for Acme Corp .");
    int entity_count = static_cast<int>(rec.at("entities").size());
    for (const json& e : rec.at("entities")) {
        CHECK(e.at("start").get<int>() >= 0);
        CHECK(e.at("end").get<int>() <= 6);
        CHECK((e.at("label").get<std::string>() == "person" ||
               e.at("label").get<std::string>() == "organization"));
        CHECK(e.at("score").get<double>() >= 0.1);
        CHECK(!e.at("text").get<std::string>().empty());
    }
    for (const json& rel : rec.at("relations")) {
        CHECK(rel.at("head").get<int>() >= 0);
        CHECK(rel.at("head").get<int>() < entity_count);
        CHECK(rel.at("tail").get<int>() >= 0);
        CHECK(rel.at("tail").get<int>() < entity_count);
        CHECK(rel.at("label").get<std::string>() == "works for");
    }
}

TEST_CASE("cli: extract with an impossible relation bar yields entities only") {
    const TrainedFixture& fx = trained();
    CliResult r = run_cli("extract --checkpoint " + fx.ckpt_path +
                          " 'Ada works for Acme .' --entity-label person"
                          " --entity-label organization --relation-label 'works for'"
                          " --threshold 0.1 --relation-threshold 1.0");
    REQUIRE(r.code == 0);
    std::vector<json> records = parse_jsonl(r.out);
    REQUIRE(records.size() == 1);
    CHECK(records[0].at("relations").empty());
}

TEST_CASE("cli: extract keeps batch order and accepts label files") {
    const TrainedFixture& fx = trained();
    std::string ent_file = "/tmp/relex_cli_ents.txt";
    std::ofstream(ent_file) << "person\norganization\n";
    std::string input_file = "/tmp/relex_cli_texts.txt";
    std::ofstream(input_file) << "first text here\nsecond text here\nthird text here\n";

    CliResult r = run_cli("extract --checkpoint " + fx.ckpt_path + " --input " +
                          input_file + " --entity-labels " + ent_file);
    REQUIRE(r.code == 0);
    std::vector<json> records = parse_jsonl(r.out);
    REQUIRE(records.size() == 3);
    CHECK(records[0].at("text").get<std::string>() == "first text here");
    CHECK(records[1].at("text").get<std::string>() == "second text here");
    CHECK(records[2].at("text").get<std::string>() == "third text here");
    for (const json& rec : records) CHECK(rec.at("relations").empty());
    std::remove(ent_file.c_str());
    std::remove(input_file.c_str());
}

TEST_CASE("cli: extract falls back to checkpoint labels or fails cleanly") {
    const TrainedFixture& fx = trained();
    // the training run recorded the grammar labels in the checkpoint
    CliResult with_meta =
        run_cli("extract --checkpoint " + fx.ckpt_path + " 'Ada visited Paris .'");
    CHECK(with_meta.code == 0);

    // a checkpoint written without label metadata cannot fill the gap
    std::string bare = "/tmp/relex_cli_bare.ckpt";
    Model::load(fx.ckpt_path).save(bare);
    CliResult no_labels = run_cli("extract --checkpoint " + bare + " 'Ada .'");
    CHECK(no_labels.code == 1);
    CHECK(no_labels.err.find("entity labels") != std::string::npos);
    std::remove(bare.c_str());

    CHECK(run_cli("extract --checkpoint /tmp/no_such.ckpt 'x' --entity-label a")
              .code == 1);
}

TEST_CASE("cli: eval report matches the metric ops called directly") {
    const TrainedFixture& fx = trained();
    CliResult r = run_cli("eval --checkpoint " + fx.ckpt_path + " --data " +
                          fx.data_path);
    REQUIRE(r.code == 0);
    json report = json::parse(r.out);

    Model model = Model::load(fx.ckpt_path);
    std::vector<AnnotatedExample> data = load_dataset(fx.data_path);
    std::vector<std::string> ents = entity_label_inventory(data);
    std::vector<std::string> rels = relation_label_inventory(data);
    ExtractionOptions opts;
    opts.entity_threshold = model.config().inference.entity_threshold;
    opts.relation_threshold = model.config().inference.relation_threshold;
    opts.flat_ner = model.config().inference.flat_ner;
    std::vector<std::vector<Entity>> pred_entities;
    std::vector<std::vector<RelationTriplet>> pred_relations;
    for (const AnnotatedExample& ex : data) {
        Extraction e = model.extract(ex.tokens, ents, rels, opts);
        pred_entities.push_back(std::move(e.entities));
        pred_relations.push_back(std::move(e.relations));
    }
    MetricsReport direct = evaluate_extractions(pred_entities, pred_relations,
                                                data, ents, rels, false);
    CHECK(report.at("entities").at("micro_f1").get<double>() ==
          direct.entities.f1);
    CHECK(report.at("entities").at("precision").get<double>() ==
          direct.entities.precision);
    CHECK(report.at("relations").at("micro_f1").get<double>() ==
          direct.relations.f1);
    CHECK(report.at("relations").at("tp").get<long long>() ==
          direct.relations.true_positives);
}

TEST_CASE("cli: eval renders a table under --pretty and rejects empty data") {
    const TrainedFixture& fx = trained();
    CliResult pretty = run_cli("eval --checkpoint " + fx.ckpt_path + " --data " +
                               fx.data_path + " --pretty");
    REQUIRE(pretty.code == 0);
    CHECK(pretty.out.find("micro-f1") != std::string::npos);
    CHECK(pretty.out.find("gold support:") != std::string::npos);

    std::string empty_path = "/tmp/relex_cli_eval_empty.jsonl";
    std::ofstream(empty_path).close();
    CliResult empty = run_cli("eval --checkpoint " + fx.ckpt_path + " --data " +
                              empty_path);
    CHECK(empty.code == 1);
    CHECK(empty.err.find("empty") != std::string::npos);
    std::remove(empty_path.c_str());
}

TEST_CASE("cli: argument errors and help behave as documented") {
    CHECK(run_cli("--definitely-not-a-flag").code == 1);
    CHECK(run_cli("").code == 1);            // a subcommand is required
    CHECK(run_cli("train").code == 1);       // missing required options
    CHECK(run_cli("--help").code == 0);
    CliResult help = run_cli("--help");
    CHECK(help.out.find("generate") != std::string::npos);
    CHECK(help.out.find("extract") != std::string::npos);
}
