// Command-line front end: generate / train / extract / eval.
//
// Machine-readable results stream to stdout as line-delimited JSON (tables
// with --pretty); the resolved configuration and progress notes go to stderr
// so output pipes stay clean. Exit codes: 0 success, 1 user error (bad
// arguments, config, or data), 2 internal error.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "relex/corpus.hpp"
#include "relex/eval.hpp"
#include "relex/model.hpp"
#include "relex/training.hpp"

namespace {

using nlohmann::json;

std::vector<std::string> read_label_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw relex::ConfigError("cannot open label file: " + path);
    std::vector<std::string> labels;
    std::string line;
    while (std::getline(in, line)) {
        std::string t = relex::detail::trim(line);
        if (!t.empty() && t[0] != '#') labels.push_back(t);
    }
    return labels;
}

std::vector<std::string> read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw relex::ConfigError("cannot open input file: " + path);
    std::vector<std::string> texts;
    std::string line;
    while (std::getline(in, line))
        if (!relex::detail::trim(line).empty()) texts.push_back(line);
    return texts;
}

std::string surface(const std::vector<std::string>& words, const relex::Span& s) {
    std::string out;
    for (int i = s.start; i <= s.end && i < static_cast<int>(words.size()); ++i) {
        if (!out.empty()) out += ' ';
        out += words[i];
    }
    return out;
}

std::vector<std::string> labels_from_meta(const json& meta, const char* key) {
    std::vector<std::string> out;
    if (meta.contains(key) && meta[key].is_array())
        for (const auto& v : meta[key])
            if (v.is_string()) out.push_back(v.get<std::string>());
    return out;
}

void print_run_header(const std::vector<std::pair<std::string, std::string>>& fields) {
    std::cerr << "[run]\n";
    for (const auto& [k, v] : fields) std::cerr << k << " = " << v << "\n";
    std::cerr << "\n";
}

void print_config_header(const relex::Config& cfg) {
    std::cerr << "# resolved configuration\n" << relex::serialize_config(cfg);
}

struct GenerateArgs {
    std::string grammar_path;
    int size = 100;
    std::optional<unsigned> seed;
    std::string out_path;
};

int cmd_generate(const GenerateArgs& a) {
    relex::GrammarSpec grammar = a.grammar_path.empty()
                                     ? relex::default_grammar()
                                     : relex::load_grammar(a.grammar_path);
    if (a.seed) grammar.seed = *a.seed;
    print_run_header({{"command", "generate"},
                      {"grammar", a.grammar_path.empty() ? "builtin" : a.grammar_path},
                      {"size", std::to_string(a.size)},
                      {"seed", std::to_string(grammar.seed)},
                      {"out", a.out_path}});

    std::vector<relex::AnnotatedExample> corpus =
        relex::generate_corpus(grammar, a.size);
    relex::save_dataset(a.out_path, corpus);

    long long entities = 0, relations = 0;
    for (const auto& ex : corpus) {
        entities += static_cast<long long>(ex.gold_entities.size());
        relations += static_cast<long long>(ex.gold_relations.size());
    }
    json summary = {{"examples", corpus.size()},
                    {"entities", entities},
                    {"relations", relations},
                    {"path", a.out_path}};
    std::cout << summary.dump() << "\n";
    return 0;
}

struct TrainArgs {
    std::string config_path;
    std::string data_path;
    std::string out_path;
    std::string trace_path;
    unsigned seed = 0;
    bool dry_run = false;
};

int cmd_train(const TrainArgs& a) {
    relex::Config cfg = a.config_path.empty() ? relex::paper_defaults()
                                              : relex::load_config(a.config_path);
    cfg.validate();
    print_config_header(cfg);
    std::cerr << "\n";
    print_run_header({{"command", "train"},
                      {"config", a.config_path.empty() ? "defaults" : a.config_path},
                      {"data", a.data_path},
                      {"out", a.out_path},
                      {"seed", std::to_string(a.seed)},
                      {"dry_run", a.dry_run ? "true" : "false"}});

    std::vector<relex::AnnotatedExample> data = relex::load_dataset(a.data_path);
    if (data.empty())
        throw relex::ConfigError("training data is empty: " + a.data_path);
    std::vector<std::string> ents = relex::entity_label_inventory(data);
    std::vector<std::string> rels = relex::relation_label_inventory(data);
    if (ents.empty())
        throw relex::ConfigError("training data carries no entity labels");

    if (a.dry_run) {
        json out = {{"dry_run", true},
                    {"examples", data.size()},
                    {"entity_labels", ents},
                    {"relation_labels", rels}};
        std::cout << out.dump() << "\n";
        return 0;
    }

    std::string trace_path =
        a.trace_path.empty() ? a.out_path + ".trace.csv" : a.trace_path;
    relex::Model model(cfg, a.seed);
    std::vector<relex::TraceRow> trace;
    int pruned = 0, dropped = 0;
    int stage_number = 0;
    for (const relex::StageConfig* stage : {&cfg.stage1, &cfg.stage2}) {
        ++stage_number;
        if (stage->epochs == 0) continue;
        std::cerr << "stage " << stage_number << ": " << stage->epochs
                  << " epoch(s) over " << data.size() << " example(s)\n";
        relex::StageResult result = relex::train_stage(
            model, data, ents, rels, *stage, a.seed + static_cast<unsigned>(stage_number));
        int offset = trace.empty() ? 0 : trace.back().step;
        for (relex::TraceRow row : result.trace) {
            row.step += offset;
            trace.push_back(row);
        }
        pruned += result.pruned_entities;
        dropped += result.dropped_relations;
    }
    relex::save_trace(trace_path, trace);

    double final_loss = model.eval_total_loss(data, ents, rels);
    json meta = {{"final_train_loss", final_loss},
                 {"entity_labels", ents},
                 {"relation_labels", rels}};
    model.save(a.out_path, meta);

    json out = {{"checkpoint", a.out_path},
                {"trace", trace_path},
                {"steps", trace.size()},
                {"final_train_loss", final_loss},
                {"pruned_entities", pruned},
                {"dropped_relations", dropped}};
    std::cout << out.dump() << "\n";
    return 0;
}

struct ExtractArgs {
    std::string checkpoint;
    std::vector<std::string> texts;
    std::string input_path;
    std::vector<std::string> entity_labels;
    std::string entity_labels_file;
    std::vector<std::string> relation_labels;
    std::string relation_labels_file;
    double threshold = 0.3;
    double relation_threshold = 0.5;
    bool flat_ner = false;
    bool pretty = false;
};

json extraction_to_json(const std::string& text,
                        const std::vector<std::string>& words,
                        const relex::Extraction& ex,
                        const std::vector<std::string>& ents,
                        const std::vector<std::string>& rels) {
    json entities = json::array();
    for (const relex::Entity& e : ex.entities)
        entities.push_back({{"text", surface(words, e.span)},
                            {"start", e.span.start},
                            {"end", e.span.end},
                            {"label", ents[static_cast<std::size_t>(e.type_index)]},
                            {"score", e.score}});
    json relations = json::array();
    for (const relex::RelationTriplet& r : ex.relations)
        relations.push_back(
            {{"head", r.head_index},
             {"tail", r.tail_index},
             {"head_text", surface(words, r.head.span)},
             {"tail_text", surface(words, r.tail.span)},
             {"label", rels[static_cast<std::size_t>(r.relation_index)]},
             {"score", r.score}});
    return {{"text", text}, {"entities", entities}, {"relations", relations}};
}

void print_extraction_table(const json& record) {
    std::cout << "text: " << record["text"].get<std::string>() << "\n";
    std::cout << "  entities:\n";
    for (std::size_t i = 0; i < record["entities"].size(); ++i) {
        const json& e = record["entities"][i];
        std::cout << "    [" << i << "] " << e["label"].get<std::string>() << "  '"
                  << e["text"].get<std::string>() << "'  (" << e["start"] << ".."
                  << e["end"] << ")  score " << e["score"] << "\n";
    }
    std::cout << "  relations:\n";
    for (const json& r : record["relations"])
        std::cout << "    " << r["label"].get<std::string>() << "  '"
                  << r["head_text"].get<std::string>() << "' -> '"
                  << r["tail_text"].get<std::string>() << "'  score " << r["score"]
                  << "\n";
}

int cmd_extract(const ExtractArgs& a) {
    relex::Model model = relex::Model::load(a.checkpoint);
    print_config_header(model.config());
    std::cerr << "\n";
    print_run_header({{"command", "extract"},
                      {"checkpoint", a.checkpoint},
                      {"threshold", relex::detail::format_double(a.threshold)},
                      {"relation_threshold",
                       relex::detail::format_double(a.relation_threshold)},
                      {"flat_ner", a.flat_ner ? "true" : "false"}});

    std::vector<std::string> ents = a.entity_labels;
    if (!a.entity_labels_file.empty())
        for (auto& l : read_label_file(a.entity_labels_file))
            ents.push_back(std::move(l));
    if (ents.empty()) ents = labels_from_meta(model.metadata(), "entity_labels");
    if (ents.empty())
        throw relex::ConfigError(
            "no entity labels given and the checkpoint records none");

    // relation labels only come from explicit flags or a file: an empty list
    // deliberately means "entities only"
    std::vector<std::string> rels = a.relation_labels;
    if (!a.relation_labels_file.empty())
        for (auto& l : read_label_file(a.relation_labels_file))
            rels.push_back(std::move(l));

    std::vector<std::string> texts = a.texts;
    if (!a.input_path.empty())
        for (auto& t : read_text_file(a.input_path)) texts.push_back(std::move(t));
    if (texts.empty())
        throw relex::ConfigError("no input texts; pass them as arguments or --input");

    relex::ExtractionOptions opts;
    opts.entity_threshold = a.threshold;
    opts.relation_threshold = a.relation_threshold;
    opts.flat_ner = a.flat_ner;

    for (const std::string& text : texts) {
        std::vector<std::string> words = relex::split_words(text);
        relex::Extraction ex = model.extract(words, ents, rels, opts);
        json record = extraction_to_json(text, words, ex, ents, rels);
        if (a.pretty)
            print_extraction_table(record);
        else
            std::cout << record.dump() << "\n";
    }
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::string data_path;
    std::optional<double> threshold;
    std::optional<double> relation_threshold;
    bool flat_ner = false;
    bool require_entity_types = false;
    bool pretty = false;
};

int cmd_eval(const EvalArgs& a) {
    relex::Model model = relex::Model::load(a.checkpoint);
    relex::ExtractionOptions opts;
    opts.entity_threshold =
        a.threshold ? *a.threshold : model.config().inference.entity_threshold;
    opts.relation_threshold = a.relation_threshold
                                  ? *a.relation_threshold
                                  : model.config().inference.relation_threshold;
    opts.flat_ner = a.flat_ner || model.config().inference.flat_ner;

    print_config_header(model.config());
    std::cerr << "\n";
    print_run_header(
        {{"command", "eval"},
         {"checkpoint", a.checkpoint},
         {"data", a.data_path},
         {"threshold", relex::detail::format_double(opts.entity_threshold)},
         {"relation_threshold",
          relex::detail::format_double(opts.relation_threshold)},
         {"flat_ner", opts.flat_ner ? "true" : "false"},
         {"require_entity_types", a.require_entity_types ? "true" : "false"}});

    std::vector<relex::AnnotatedExample> data = relex::load_dataset(a.data_path);
    if (data.empty())
        throw relex::ConfigError("evaluation dataset is empty: " + a.data_path);
    std::vector<std::string> ents = relex::entity_label_inventory(data);
    std::vector<std::string> rels = relex::relation_label_inventory(data);
    if (ents.empty()) ents = labels_from_meta(model.metadata(), "entity_labels");
    if (rels.empty()) rels = labels_from_meta(model.metadata(), "relation_labels");
    if (ents.empty())
        throw relex::ConfigError(
            "dataset carries no entity labels and the checkpoint records none");

    std::vector<std::vector<relex::Entity>> pred_entities;
    std::vector<std::vector<relex::RelationTriplet>> pred_relations;
    pred_entities.reserve(data.size());
    pred_relations.reserve(data.size());
    for (const relex::AnnotatedExample& ex : data) {
        relex::Extraction result = model.extract(ex.tokens, ents, rels, opts);
        pred_entities.push_back(std::move(result.entities));
        pred_relations.push_back(std::move(result.relations));
    }

    relex::MetricsReport report = relex::evaluate_extractions(
        pred_entities, pred_relations, data, ents, rels, a.require_entity_types);
    if (a.pretty)
        std::cout << report.table();
    else
        std::cout << report.to_json().dump() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"zero-shot joint entity and relation extraction"};
    app.require_subcommand(1);

    GenerateArgs gen;
    CLI::App* generate =
        app.add_subcommand("generate", "emit a synthetic labeled corpus");
    generate->add_option("--grammar", gen.grammar_path,
                         "grammar spec JSON (omit for the built-in grammar)");
    generate->add_option("--size", gen.size, "number of examples")
        ->default_val(100);
    generate->add_option("--seed", gen.seed, "override the grammar seed");
    generate->add_option("--out", gen.out_path, "output dataset path (JSONL)")
        ->required();

    TrainArgs tr;
    CLI::App* train = app.add_subcommand("train", "run the two-stage training loop");
    train->add_option("--config", tr.config_path,
                      "config file (omit for published defaults)");
    train->add_option("--data", tr.data_path, "training dataset (JSONL)")
        ->required();
    train->add_option("--out", tr.out_path, "checkpoint output path")->required();
    train->add_option("--trace", tr.trace_path,
                      "loss trace CSV path (default: <out>.trace.csv)");
    train->add_option("--seed", tr.seed, "training seed")->default_val(0u);
    train->add_flag("--dry-run", tr.dry_run,
                    "validate config and data, then stop");

    ExtractArgs ex;
    CLI::App* extract =
        app.add_subcommand("extract", "extract entities and relations from text");
    extract->add_option("--checkpoint", ex.checkpoint, "model checkpoint")
        ->required();
    extract->add_option("text", ex.texts, "input texts");
    extract->add_option("--input", ex.input_path, "file with one text per line");
    extract->add_option("--entity-label", ex.entity_labels,
                        "entity label (repeatable)");
    extract->add_option("--entity-labels", ex.entity_labels_file,
                        "file with one entity label per line");
    extract->add_option("--relation-label", ex.relation_labels,
                        "relation label (repeatable)");
    extract->add_option("--relation-labels", ex.relation_labels_file,
                        "file with one relation label per line");
    extract->add_option("--threshold", ex.threshold, "entity score threshold")
        ->default_val(0.3);
    extract
        ->add_option("--relation-threshold", ex.relation_threshold,
                     "relation score threshold")
        ->default_val(0.5);
    extract->add_flag("--flat-ner", ex.flat_ner,
                      "forbid overlapping entity spans");
    extract->add_flag("--pretty", ex.pretty, "human-readable tables");

    EvalArgs ev;
    CLI::App* eval_cmd =
        app.add_subcommand("eval", "score a checkpoint against a labeled dataset");
    eval_cmd->add_option("--checkpoint", ev.checkpoint, "model checkpoint")
        ->required();
    eval_cmd->add_option("--data", ev.data_path, "evaluation dataset (JSONL)")
        ->required();
    eval_cmd->add_option("--threshold", ev.threshold,
                         "entity threshold override");
    eval_cmd->add_option("--relation-threshold", ev.relation_threshold,
                         "relation threshold override");
    eval_cmd->add_flag("--flat-ner", ev.flat_ner, "force flat span decoding");
    eval_cmd->add_flag("--require-entity-types", ev.require_entity_types,
                       "relation matches must also agree on endpoint entity types");
    eval_cmd->add_flag("--pretty", ev.pretty, "human-readable table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (generate->parsed()) return cmd_generate(gen);
        if (train->parsed()) return cmd_train(tr);
        if (extract->parsed()) return cmd_extract(ex);
        if (eval_cmd->parsed()) return cmd_eval(ev);
        std::cerr << "error: no command given\n";
        return 1;
    } catch (const relex::TrainingError& e) {
        std::cerr << "error: training diverged at step " << e.step() << ": "
                  << e.what() << "\n";
        return 2;
    } catch (const relex::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const relex::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
}
