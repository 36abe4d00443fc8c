// Command-line front end: block, tune, resolve, evaluate, simulate, synth.

#include <CLI11.hpp>
#include <algorithm>
#include <fmt/format.h>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <numeric>
#include <optional>
#include <random>

#include "llmcer/blocking.hpp"
#include "llmcer/dataset.hpp"
#include "llmcer/engine.hpp"
#include "llmcer/error.hpp"
#include "llmcer/llm_gateway.hpp"
#include "llmcer/metrics.hpp"
#include "llmcer/report.hpp"
#include "llmcer/similarity.hpp"
#include "llmcer/synthetic.hpp"

using namespace llmcer;
using json = nlohmann::ordered_json;

namespace {

enum ExitCode { kOk = 0, kConfig = 1, kData = 2, kProvider = 3 };

struct Options {
    std::string data;
    std::string id_column = "id";
    std::string truth_column;
    std::string truth;
    std::string embeddings;
    char delimiter = ',';
    std::string measure = "cosine";

    std::string blocking = "lsh";
    BlockingParams block;

    SetConfig sets;
    bool guardrail = true;
    std::size_t parallelism = 1;

    std::string backend;
    double error_rate = 0.0;
    ProviderConfig provider;
    long timeout_s = 60;
    std::size_t parse_retries = 3;
    double price_in = 0.15;
    double price_out = 0.60;
    std::string transcript;

    std::string output;
    std::string report;
    std::string blocks_out;

    // tune
    std::size_t sample = 200;
    // evaluate
    std::string partition;
    // simulate
    std::vector<std::uint64_t> seeds;
    std::vector<double> error_rates;
    bool compare_guardrail = false;
    // synth
    SyntheticConfig synth;
    std::string truth_out;
    std::string embeddings_out;
};

int exit_code(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConfigError:
        case ErrorCode::BadThresholds:
        case ErrorCode::BadK:
            return kConfig;
        case ErrorCode::ProviderUnavailable:
            return kProvider;
        default:
            return kData;
    }
}

void emit(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
    } else {
        atomic_write(path, content);
    }
}

Dataset load_dataset(const Options& o) {
    if (o.data.empty()) throw Error(ErrorCode::ConfigError, "--data is required");
    IngestOptions in;
    in.id_column = o.id_column;
    in.delimiter = o.delimiter;
    if (!o.truth_column.empty()) in.truth_column = o.truth_column;
    Dataset ds = ingest(o.data, in);
    if (!o.truth.empty()) attach_truth(ds, o.truth);
    return ds;
}

SimilarityModel load_model(const Dataset& ds, const Options& o) {
    const Measure measure = parse_measure(o.measure);
    if (!o.embeddings.empty()) return SimilarityModel(ds.records, load_embeddings(o.embeddings, ds.records), measure);
    HashedTfidfEmbedder embedder(ds.records);
    return SimilarityModel(ds.records, embedder.embed_all(ds.records), measure);
}

BlockingParams blocking_params(const Options& o) {
    BlockingParams p = o.block;
    p.method = parse_blocking_method(o.blocking);
    p.validate();
    return p;
}

std::unique_ptr<Backend> make_backend(const Options& o, const Dataset& ds, std::uint64_t seed, double error_rate) {
    if (o.backend == "oracle") {
        if (!ds.truth) throw Error(ErrorCode::ConfigError, "the oracle backend needs ground truth (--truth or --truth-column)");
        OracleConfig oc;
        oc.entity = ds.entity_labels();
        oc.error_rate = error_rate;
        oc.seed = seed;
        return std::make_unique<OracleBackend>(std::move(oc));
    }
    if (o.backend == "openai") {
        ProviderConfig pc = o.provider;
        pc.temperature = o.sets.temperature;
        pc.timeout = std::chrono::seconds(o.timeout_s);
        return std::make_unique<HttpBackend>(pc);
    }
    if (o.backend.empty()) {
        throw Error(ErrorCode::ConfigError,
                    "no backend configured: pass --backend oracle (needs ground truth) or --backend openai");
    }
    throw Error(ErrorCode::ConfigError, fmt::format("unknown backend '{}' (oracle, openai)", o.backend));
}

EngineConfig engine_config(const Options& o) {
    EngineConfig ec;
    ec.sets = o.sets;
    ec.guardrail = o.guardrail;
    ec.parallelism = o.parallelism;
    ec.validate();
    return ec;
}

GatewayConfig gateway_config(const Options& o) { return GatewayConfig{o.parse_retries, o.sets.batch_size}; }

int run_block(const Options& o) {
    const Dataset ds = load_dataset(o);
    const SimilarityModel model = load_model(ds, o);
    const auto params = blocking_params(o);
    const auto blocks = make_blocks(ds.records, model, params);
    if (!o.blocks_out.empty()) emit(o.blocks_out, format_blocks(ds, blocks));

    std::size_t largest = 0;
    double candidate_pairs = 0.0;
    for (const auto& b : blocks) {
        largest = std::max(largest, b.members.size());
        candidate_pairs += 0.5 * static_cast<double>(b.members.size()) * static_cast<double>(b.members.size() - 1);
    }
    const double n = static_cast<double>(ds.records.size());
    json report = {
        {"records", ds.records.size()},
        {"method", to_string(params.method)},
        {"threshold", params.threshold},
        {"blocks", blocks.size()},
        {"largest_block", largest},
        {"candidate_pairs", candidate_pairs},
        {"reduction_ratio", n > 1 ? 1.0 - candidate_pairs / (0.5 * n * (n - 1)) : 0.0},
    };
    if (ds.truth) {
        const auto scores = pairwise_f1(blocks_as_partition(blocks), ds.truth_partition());
        report["pair_completeness"] = scores.recall;
        report["pair_quality"] = scores.precision;
    }
    emit(o.report, report.dump(2) + "\n");
    return kOk;
}

int run_tune(const Options& o) {
    const Dataset ds = load_dataset(o);
    const SimilarityModel model = load_model(ds, o);
    const auto params = blocking_params(o);

    std::vector<RecordIndex> all(ds.records.size());
    std::iota(all.begin(), all.end(), 0);
    std::mt19937_64 rng(o.sets.seed);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(std::min(all.size(), o.sample));
    std::sort(all.begin(), all.end());

    std::vector<std::size_t> labels;
    std::string source;
    CostLedger ledger(o.price_in, o.price_out);
    if (ds.truth) {
        const auto truth = ds.entity_labels();
        for (RecordIndex r : all) labels.push_back(truth[r]);
        source = "ground truth";
    } else {
        auto backend = make_backend(o, ds, o.sets.seed, o.error_rate);
        Gateway gateway(*backend, ds.records, ledger, gateway_config(o));
        labels = Resolver(ds.records, model, gateway, engine_config(o)).pseudo_labels(all);
        source = "pseudo labels";
    }

    PairMetric sim;
    switch (params.method) {
        case BlockingMethod::filter:
        case BlockingMethod::canopy:
            sim = [&model](RecordIndex a, RecordIndex b) { return model.jaccard(a, b); };
            break;
        case BlockingMethod::lsh:
            sim = [&model](RecordIndex a, RecordIndex b) { return model.cosine(a, b); };
            break;
        case BlockingMethod::none:
            sim = [&model](RecordIndex a, RecordIndex b) { return model(a, b); };
            break;
    }
    const auto curve = threshold_sweep(all, sim, labels);
    json points = json::array();
    for (const auto& p : curve) points.push_back({{"threshold", p.threshold}, {"f1", p.score}});
    json report = {
        {"method", to_string(params.method)},
        {"sample", all.size()},
        {"labels", source},
        {"best_threshold", tune_threshold(all, sim, labels)},
        {"curve", points},
        {"ledger", to_json(ledger.totals())},
    };
    emit(o.report, report.dump(2) + "\n");
    return kOk;
}

struct RunResult {
    Resolution resolution;
    std::optional<MetricReport> metrics;
};

RunResult resolve_once(const Options& o, const Dataset& ds, const SimilarityModel& model,
                       std::span<const Block> blocks, std::uint64_t seed, double error_rate, bool guardrail,
                       TranscriptLog* transcript) {
    auto backend = make_backend(o, ds, seed, error_rate);
    CostLedger ledger(o.price_in, o.price_out);
    Gateway gateway(*backend, ds.records, ledger, gateway_config(o), transcript);
    EngineConfig ec = engine_config(o);
    ec.sets.seed = seed;
    ec.guardrail = guardrail;
    RunResult out{Resolver(ds.records, model, gateway, ec).resolve(blocks), std::nullopt};
    if (ds.truth) out.metrics = evaluate(out.resolution.partition, ds.truth_partition());
    return out;
}

int run_resolve(const Options& o) {
    const Dataset ds = load_dataset(o);
    if (o.backend.empty()) make_backend(o, ds, 0, 0.0);
    const SimilarityModel model = load_model(ds, o);
    const auto blocks = make_blocks(ds.records, model, blocking_params(o));
    std::unique_ptr<TranscriptLog> transcript;
    if (!o.transcript.empty()) transcript = std::make_unique<TranscriptLog>(o.transcript);

    const auto result = resolve_once(o, ds, model, blocks, o.sets.seed, o.error_rate, o.guardrail, transcript.get());
    emit(o.output.empty() ? "-" : o.output, format_partition(ds, result.resolution.partition));

    json report = {{"records", ds.records.size()},
                   {"clusters", result.resolution.partition.clusters.size()},
                   {"backend", o.backend},
                   {"token_counts", o.backend == "oracle" ? "estimate (chars/4)" : "provider usage"}};
    report.update(to_json(result.resolution.report));
    if (result.metrics) report["metrics"] = to_json(*result.metrics);
    if (!o.report.empty()) emit(o.report, report.dump(2) + "\n");
    else if (!o.output.empty()) std::cout << report.dump(2) << "\n";
    return kOk;
}

int run_evaluate(const Options& o) {
    const Dataset ds = load_dataset(o);
    if (o.partition.empty()) throw Error(ErrorCode::ConfigError, "--partition is required");
    if (!ds.truth) throw Error(ErrorCode::ConfigError, "evaluate needs ground truth (--truth or --truth-column)");
    const Partition pred = read_partition(o.partition, ds);
    json report = {{"records", ds.records.size()},
                   {"predicted_clusters", pred.clusters.size()},
                   {"true_clusters", ds.truth_partition().clusters.size()}};
    report["metrics"] = to_json(evaluate(pred, ds.truth_partition()));
    emit(o.report, report.dump(2) + "\n");
    return kOk;
}

int run_simulate(const Options& o) {
    Options opts = o;
    opts.backend = "oracle";
    const Dataset ds = load_dataset(opts);
    if (!ds.truth) throw Error(ErrorCode::ConfigError, "simulate needs ground truth (--truth or --truth-column)");
    const SimilarityModel model = load_model(ds, opts);
    const auto blocks = make_blocks(ds.records, model, blocking_params(opts));

    const auto seeds = o.seeds.empty() ? std::vector<std::uint64_t>{o.sets.seed} : o.seeds;
    const auto rates = o.error_rates.empty() ? std::vector<double>{o.error_rate} : o.error_rates;
    std::vector<bool> modes{o.guardrail};
    if (o.compare_guardrail) modes = {true, false};

    json rows = json::array();
    for (double rate : rates) {
        for (std::uint64_t seed : seeds) {
            for (bool guard : modes) {
                const auto r = resolve_once(opts, ds, model, blocks, seed, rate, guard, nullptr);
                json levels = json::array();
                for (std::size_t n : r.resolution.report.sets_per_level) levels.push_back(n);
                rows.push_back({{"error_rate", rate},
                                {"seed", seed},
                                {"guardrail", guard},
                                {"api_calls", r.resolution.report.ledger.api_calls},
                                {"tokens_in", r.resolution.report.ledger.tokens_in},
                                {"tokens_out", r.resolution.report.ledger.tokens_out},
                                {"sets_per_level", levels},
                                {"final_check_sets", r.resolution.report.final_check_sets},
                                {"regenerations", r.resolution.report.guardrail.regenerations},
                                {"metrics", to_json(*r.metrics)}});
            }
        }
    }
    json report = {{"records", ds.records.size()}, {"blocks", blocks.size()}, {"runs", rows}};
    emit(o.report, report.dump(2) + "\n");
    return kOk;
}

int run_synth(const Options& o) {
    const auto data = make_synthetic(o.synth);
    emit(o.output.empty() ? "-" : o.output, format_dataset(data.dataset, "id", "entity_id"));
    if (!o.truth_out.empty()) emit(o.truth_out, format_truth(data.dataset));
    if (!o.embeddings_out.empty()) write_embeddings(o.embeddings_out, data.dataset.records, data.embeddings);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    CLI::App app{"LLM-driven in-context clustering for entity resolution"};
    app.set_config("--config", "", "Flat key=value file; keys are long option names");
    app.require_subcommand(1);
    app.fallthrough();

    app.add_option("--data", o.data, "Delimited record file with a header row");
    app.add_option("--id-column", o.id_column, "Column holding record ids")->capture_default_str();
    app.add_option("--truth-column", o.truth_column, "Column holding entity ids (removed from attributes)");
    app.add_option("--truth", o.truth, "record_id,entity_id file");
    app.add_option("--embeddings", o.embeddings, "id,d0,... file; hashed TF-IDF when absent");
    app.add_option("--delimiter", o.delimiter, "Field delimiter")->capture_default_str();
    app.add_option("--measure", o.measure, "Record similarity: cosine or jaccard")->capture_default_str();

    app.add_option("--blocking", o.blocking, "none, filter, lsh or canopy")->capture_default_str();
    app.add_option("--threshold", o.block.threshold, "Blocking threshold b_t")->capture_default_str();
    app.add_option("--lsh-planes", o.block.lsh_planes, "Random hyperplanes")->capture_default_str();
    app.add_option("--lsh-bands", o.block.lsh_bands, "LSH bands")->capture_default_str();
    app.add_option("--canopy-tight", o.block.canopy_tight, "Canopy tight threshold b_s")->capture_default_str();
    app.add_option("--canopy-loose", o.block.canopy_loose, "Canopy loose threshold m_s")->capture_default_str();
    app.add_option("--k-candidates", o.block.k_candidates, "Filter join partners kept per record")
        ->capture_default_str();

    app.add_option("--set-size", o.sets.set_size, "Records per set S_s")->capture_default_str();
    app.add_option("--diversity", o.sets.diversity, "Entities per set S_d")->capture_default_str();
    app.add_option("--batch-size", o.sets.batch_size, "Record sets per prompt")->capture_default_str();
    app.add_option("--max-regen", o.sets.max_regen, "Regenerations per rejected set")->capture_default_str();
    app.add_option("--temperature", o.sets.temperature, "Sampling temperature")->capture_default_str();
    app.add_option("--seed", o.sets.seed, "Seed for sets, blocking and the oracle")->capture_default_str();
    app.add_option("--guardrail", o.guardrail, "Check answers and regenerate rejected sets")->capture_default_str();
    app.add_option("--parallelism", o.parallelism, "Worker threads")->capture_default_str();

    app.add_option("--backend", o.backend, "oracle or openai");
    app.add_option("--error-rate", o.error_rate, "Oracle per-member error rate")->capture_default_str();
    app.add_option("--endpoint", o.provider.endpoint, "Chat-completions URL")->capture_default_str();
    app.add_option("--model", o.provider.model, "Model name")->capture_default_str();
    app.add_option("--api-key-env", o.provider.api_key_env, "Variable holding the API key")->capture_default_str();
    app.add_option("--timeout", o.timeout_s, "Request timeout in seconds")->capture_default_str();
    app.add_option("--http-retries", o.provider.max_retries, "Transport retries")->capture_default_str();
    app.add_option("--rpm", o.provider.requests_per_minute, "Requests per minute, 0 = unlimited")
        ->capture_default_str();
    app.add_option("--parse-retries", o.parse_retries, "Re-asks after unparseable answers")->capture_default_str();
    app.add_option("--price-in", o.price_in, "USD per million input tokens")->capture_default_str();
    app.add_option("--price-out", o.price_out, "USD per million output tokens")->capture_default_str();
    app.add_option("--transcript", o.transcript, "JSON-lines prompt/response log");

    app.add_option("--output", o.output, "Main artifact (partition or dataset); stdout when absent");
    app.add_option("--report", o.report, "Report file; stdout when absent");
    app.add_option("--blocks-out", o.blocks_out, "block_id,record_id file");

    auto* block = app.add_subcommand("block", "Block records and report blocking quality");
    auto* tune = app.add_subcommand("tune", "Sweep the blocking threshold on a sample");
    tune->add_option("--sample", o.sample, "Sample size")->capture_default_str();
    auto* resolve = app.add_subcommand("resolve", "Run the full pipeline");
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a partition file against ground truth");
    evaluate_cmd->add_option("--partition", o.partition, "record_id,cluster_id file")->required();
    auto* simulate = app.add_subcommand("simulate", "Resolve with the simulated oracle across seeds and error rates");
    simulate->add_option("--seeds", o.seeds, "Seeds")->delimiter(',');
    simulate->add_option("--error-rates", o.error_rates, "Error rates")->delimiter(',');
    simulate->add_flag("--compare-guardrail", o.compare_guardrail, "Run with and without the guardrail");
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dirty dataset");
    synth->add_option("--entities", o.synth.entities)->capture_default_str();
    synth->add_option("--duplicates", o.synth.duplicates, "Records per entity")->capture_default_str();
    synth->add_option("--attributes", o.synth.attributes)->capture_default_str();
    synth->add_option("--typo-rate", o.synth.typo_rate)->capture_default_str();
    synth->add_option("--drop-rate", o.synth.drop_rate)->capture_default_str();
    synth->add_option("--family-size", o.synth.family_size, "Entities per embedding family")
        ->capture_default_str();
    synth->add_option("--embedding-dim", o.synth.embedding_dim)->capture_default_str();
    synth->add_option("--truth-out", o.truth_out, "record_id,entity_id file");
    synth->add_option("--embeddings-out", o.embeddings_out, "Planted embeddings file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }
    o.synth.seed = o.sets.seed;

    try {
        if (*block) return run_block(o);
        if (*tune) return run_tune(o);
        if (*resolve) return run_resolve(o);
        if (*evaluate_cmd) return run_evaluate(o);
        if (*simulate) return run_simulate(o);
        if (*synth) return run_synth(o);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.code());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    }
    return kConfig;
}
