// Command-line front end: synth, train, eval, explain, bench.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cardiodg/cardiodg.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <iomanip>
#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif
#if defined(_OPENMP)
#include <omp.h>
#endif

namespace {

using namespace cardiodg;
using json = nlohmann::json;
namespace fs = std::filesystem;

/// Bad flags or inputs the user can fix; mapped to exit code 2.
class UsageError : public Error {
public:
    using Error::Error;
};

std::uint64_t parse_seed(const std::string &s, const std::string &what)
{
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw UsageError(what + " must be a non-negative integer, got '" + s + "'");
    return v;
}

/// Flag wins, then CARDIO_DG_SEED, then `fallback`.
std::uint64_t resolve_seed(const std::optional<std::uint64_t> &flag, std::uint64_t fallback = 42)
{
    if (flag)
        return *flag;
    if (const char *env = std::getenv("CARDIO_DG_SEED"); env && *env)
        return parse_seed(env, "CARDIO_DG_SEED");
    return fallback;
}

json read_json_file(const fs::path &p, const std::string &what)
{
    if (!fs::exists(p))
        throw UsageError(what + " not found: " + p.string());
    try {
        return json::parse(detail::read_file(p));
    } catch (const json::parse_error &e) {
        throw UsageError(what + " " + p.string() + " is not valid JSON: " + e.what());
    }
}

json provenance(const json &config, std::uint64_t seed, const std::string &manifest_hash)
{
    return {{"tool", "cardiodg"},
            {"tool_version", kToolVersion},
            {"seed", seed},
            {"manifest_hash", manifest_hash},
            {"config", config}};
}

std::string with_header(const json &prov, const std::string &csv) { return "# " + prov.dump() + "\n" + csv; }

fs::path sibling(const fs::path &p, const std::string &suffix)
{
    return p.parent_path() / (p.stem().string() + suffix);
}

DatasetManifest open_manifest(const fs::path &p)
{
    if (!fs::exists(p))
        throw UsageError("manifest not found: " + p.string());
    return load_manifest(p);
}

Variant variant_flag(const std::string &s)
{
    try {
        return parse_variant(s);
    } catch (const Error &e) {
        throw UsageError(e.what());
    }
}

eval::ProtocolSpec protocol_flag(const std::string &s)
{
    try {
        return eval::ProtocolSpec::parse(s);
    } catch (const Error &e) {
        throw UsageError(e.what());
    }
}

synth::ClassMix mix_flag(const std::string &s)
{
    if (s == "reference")
        return synth::reference_class_mix();
    if (s == "balanced")
        return synth::balanced_class_mix();
    synth::ClassMix mix{};
    std::stringstream ss(s);
    std::string cell;
    std::size_t i = 0;
    while (std::getline(ss, cell, ',')) {
        if (i == mix.size())
            throw UsageError("--mix takes 7 proportions");
        try {
            mix[i++] = std::stod(cell);
        } catch (const std::exception &) {
            throw UsageError("--mix: '" + cell + "' is not a number");
        }
    }
    if (i != mix.size())
        throw UsageError("--mix takes 'reference', 'balanced' or 7 comma-separated proportions");
    return mix;
}

// ------------------------------------------------------------------ synth

struct SynthArgs {
    fs::path out;
    int domains = 4;
    int records = 200;
    std::optional<std::uint64_t> seed;
    fs::path profile_file;
    std::string mix = "reference";
    double duration = 10;
};

int cmd_synth(const SynthArgs &a)
{
    if (a.domains < 1)
        throw UsageError("--domains must be >= 1");
    if (a.records < 1)
        throw UsageError("--records-per-domain must be >= 1");
    std::vector<synth::DomainProfile> pool = synth::default_domains();
    if (!a.profile_file.empty()) {
        const json j = read_json_file(a.profile_file, "profile file");
        const json &arr = j.is_object() && j.contains("domains") ? j.at("domains") : j;
        if (!arr.is_array())
            throw UsageError("profile file must hold a JSON array of domain profiles (or {\"domains\": [...]})");
        pool = arr.get<std::vector<synth::DomainProfile>>();
    }
    if (std::size_t(a.domains) > pool.size())
        throw UsageError("--domains " + std::to_string(a.domains) + " exceeds the " + std::to_string(pool.size()) +
                         " available profiles");
    synth::DatasetSpec spec;
    spec.domains.assign(pool.begin(), pool.begin() + a.domains);
    spec.class_mix = mix_flag(a.mix);
    spec.n_per_domain = std::size_t(a.records);
    spec.duration_s = a.duration;
    spec.seed = resolve_seed(a.seed);
    try {
        synth::largest_remainder(spec.class_mix, spec.n_per_domain);
    } catch (const Error &e) {
        throw UsageError(e.what());
    }

    const auto m = synth::generate_dataset(spec, a.out);
    const json cfg = {{"domains", spec.domains},          {"class_mix", spec.class_mix},
                      {"records_per_domain", spec.n_per_domain}, {"fs", spec.fs},
                      {"duration_s", spec.duration_s}};
    detail::write_file(a.out / "synth_config.json",
                       provenance(cfg, spec.seed, hash_file(a.out / "manifest.json")).dump(2) + "\n");

    std::cout << std::left << std::setw(14) << "domain";
    for (auto n : kClassNames)
        std::cout << std::right << std::setw(6) << n;
    std::cout << std::setw(7) << "total" << "\n";
    for (const auto &d : spec.domains) {
        std::array<std::size_t, kNumClasses> c{};
        for (const auto &e : m.records)
            if (e.domain == d.name)
                ++c[std::size_t(e.label)];
        std::cout << std::left << std::setw(14) << d.name << std::right;
        for (auto v : c)
            std::cout << std::setw(6) << v;
        std::cout << std::setw(7) << std::accumulate(c.begin(), c.end(), std::size_t{0}) << "\n";
    }
    std::cout << m.records.size() << " records written to " << a.out.string() << "\n";
    return 0;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
    fs::path manifest;
    std::string variant;
    std::string protocol = "intra:ALL";
    fs::path config;
    std::string preset = "desk";
    fs::path out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
    bool quiet = false;
};

struct Resolved {
    ModelConfig model;
    TrainConfig train;
};

Resolved resolve_configs(Variant v, const std::string &preset, const fs::path &config_file,
                         const std::optional<std::uint64_t> &seed_flag, const std::optional<std::size_t> &epochs)
{
    Resolved r;
    if (preset == "desk") {
        r.model = ModelConfig::desk(v);
        r.train = TrainConfig::desk(v);
    } else if (preset == "full-size") {
        r.model.variant = v;
        r.train = TrainConfig::for_variant(v);
    } else {
        throw UsageError("--preset must be desk or full-size");
    }
    std::optional<std::uint64_t> file_seed;
    if (!config_file.empty()) {
        const json j = read_json_file(config_file, "config file");
        try {
            if (j.contains("model"))
                j.at("model").get_to(r.model);
            if (j.contains("train")) {
                j.at("train").get_to(r.train);
                if (j.at("train").contains("seed"))
                    file_seed = j.at("train").at("seed").get<std::uint64_t>();
            }
        } catch (const json::exception &e) {
            throw UsageError("config file " + config_file.string() + ": " + e.what());
        }
        r.model.variant = v;
    }
    r.train.seed = seed_flag ? *seed_flag : file_seed ? *file_seed : resolve_seed(std::nullopt);
    if (epochs)
        r.train.max_epochs = *epochs;
    try {
        r.model.validate();
        r.train.validate();
    } catch (const Error &e) {
        throw UsageError(e.what());
    }
    return r;
}

int cmd_train(const TrainArgs &a)
{
    const Variant v = variant_flag(a.variant);
    const auto spec = protocol_flag(a.protocol);
    const Resolved cfg = resolve_configs(v, a.preset, a.config, a.seed, a.epochs);
    const auto m = open_manifest(a.manifest);
    const std::string mhash = hash_file(a.manifest);

    const auto plan = eval::make_split(m, spec, cfg.train.seed);
    eval::validate_plan(plan, m);
    const Dataset train = load_dataset(m, plan.train_ids);
    const Dataset val = load_dataset(m, plan.val_ids);

    Model<float> model(cfg.model, cfg.train.seed);
    FitOptions opts;
    opts.meta.protocol = spec.str();
    opts.meta.source_domains = plan.source_domains;
    opts.meta.manifest_hash = mhash;
    if (!a.quiet)
        opts.on_epoch = [](const EpochLog &e) {
            std::cerr << "epoch " << std::setw(3) << e.epoch << "  loss " << std::fixed << std::setprecision(4)
                      << e.train_loss << "  val_loss " << e.val_loss << "  val_f1 " << e.val_macro_f1 << "  lr "
                      << std::scientific << std::setprecision(2) << e.lr << std::defaultfloat << "\n";
        };
    const FitResult res = fit(train, val, model, cfg.train, opts);

    const json resolved = {{"variant", to_string(v)},      {"preset", a.preset},
                           {"protocol", spec.str()},       {"manifest", a.manifest.string()},
                           {"model", cfg.model},           {"train", cfg.train},
                           {"n_train", train.size()},      {"n_val", val.size()}};
    const json prov = provenance(resolved, cfg.train.seed, mhash);
    if (!a.out.parent_path().empty())
        fs::create_directories(a.out.parent_path());
    save_checkpoint(res.best, a.out);
    detail::write_file(sibling(a.out, ".trainlog.json"), json{{"provenance", prov}, {"log", res.log}}.dump(2) + "\n");
    detail::write_file(sibling(a.out, ".trainlog.csv"), with_header(prov, res.log.to_csv()));
    detail::write_file(sibling(a.out, ".config.json"), prov.dump(2) + "\n");

    std::cout << "variant " << to_string(v) << "  params " << count_params(cfg.model) << "  epochs "
              << res.log.epochs.size() << "  best epoch " << res.log.best_epoch << "  best val macro-F1 "
              << std::fixed << std::setprecision(4) << res.best.meta.best_val_macro_f1 << "\n"
              << "checkpoint " << a.out.string() << "\n";
    return 0;
}

// ------------------------------------------------------------------ eval

struct EvalArgs {
    std::vector<fs::path> ckpts;
    std::vector<fs::path> compare;
    fs::path manifest;
    std::string protocol;
    std::string split = "test";
    std::string stress = "none";
    std::optional<std::uint64_t> stress_seed;
    fs::path out = ".";
};

Checkpoint open_checkpoint(const fs::path &p)
{
    if (!fs::exists(p))
        throw UsageError("checkpoint not found: " + p.string());
    return load_checkpoint(p);
}

/// Ids of the requested partition; refuses any plan that would score records
/// the checkpoint has seen in training.
std::vector<std::string> eval_ids(const DatasetManifest &m, const Checkpoint &cp, const eval::ProtocolSpec &spec,
                                  const std::string &split)
{
    std::vector<std::string> seen = cp.meta.train_ids;
    seen.insert(seen.end(), cp.meta.val_ids.begin(), cp.meta.val_ids.end());
    if (spec.protocol == eval::Protocol::LODO) {
        std::vector<std::string> target;
        for (const auto &e : m.records)
            if (e.domain == spec.domain)
                target.push_back(e.id);
        eval::assert_no_leakage(seen, target);
    }
    const auto plan = eval::make_split(m, spec, cp.meta.seed);
    eval::validate_plan(plan, m);
    if (split == "test") {
        const std::set<std::string> trained(cp.meta.train_ids.begin(), cp.meta.train_ids.end());
        for (const auto &id : plan.test_ids)
            if (trained.count(id))
                throw eval::LeakageError("test record " + id + " was used in training");
        return plan.test_ids;
    }
    if (split == "val")
        return plan.val_ids;
    if (split == "train")
        return plan.train_ids;
    std::vector<std::string> all;
    for (const auto &e : m.records)
        all.push_back(e.id);
    return all;
}

std::string artifact_stem(const fs::path &ckpt, const eval::StressSpec &stress, const std::string &split)
{
    std::string s = ckpt.stem().string();
    if (split != "test")
        s += "." + split;
    if (stress.mode != eval::StressMode::None) {
        std::string tag = stress.str();
        std::replace(tag.begin(), tag.end(), ':', '-');
        s += "." + tag;
    }
    return s;
}

eval::EvalReport evaluate_checkpoint(const fs::path &path, const EvalArgs &a, const DatasetManifest &m,
                                     const std::string &mhash)
{
    const Checkpoint cp = open_checkpoint(path);
    const std::string proto = a.protocol.empty() ? cp.meta.protocol : a.protocol;
    if (proto.empty())
        throw UsageError("checkpoint " + path.string() + " records no protocol; pass --protocol");
    const auto spec = protocol_flag(proto);
    eval::EvalOptions opt;
    try {
        opt.stress = eval::StressSpec::parse(a.stress, a.stress_seed ? *a.stress_seed : cp.meta.seed);
    } catch (const Error &e) {
        throw UsageError(e.what());
    }
    const auto ids = eval_ids(m, cp, spec, a.split);
    if (ids.empty())
        throw Error("the " + a.split + " partition of " + spec.str() + " is empty");
    Model<float> model(cp.config, 0);
    load_into(model, cp);
    const Dataset test = eval::load_eval_set(m, ids, opt);
    auto report = eval::evaluate(model, test, opt);
    report.protocol = spec.str();
    report.seed = cp.meta.seed;
    const json resolved = {{"checkpoint", path.string()},
                           {"checkpoint_hash", hash_file(path)},
                           {"model", cp.config},
                           {"training", cp.meta.train_config},
                           {"protocol", spec.str()},
                           {"split", a.split},
                           {"stress", opt.stress.str()},
                           {"stress_seed", opt.stress.seed},
                           {"bootstrap", {{"n_resamples", opt.n_resamples}, {"seed", opt.bootstrap_seed}}}};
    report.provenance = provenance(resolved, cp.meta.seed, mhash);

    fs::create_directories(a.out);
    const std::string stem = artifact_stem(path, opt.stress, a.split);
    detail::write_file(a.out / (stem + ".report.json"), eval::to_json_report(report).dump(2) + "\n");
    detail::write_file(a.out / (stem + ".confusion.csv"),
                       with_header(report.provenance, eval::confusion_csv(report.metrics.confusion)));
    std::cout << std::left << std::setw(28) << stem << std::right << std::fixed << std::setprecision(4) << "  n "
              << std::setw(4) << report.n_test << "  acc " << report.metrics.accuracy << "  macro-F1 "
              << report.metrics.macro_f1 << " [" << report.ci.lo << ", " << report.ci.hi << "]  AUROC "
              << report.auroc.macro << (report.accuracy_paradox ? "  (majority-class collapse)" : "") << "\n";
    return report;
}

int cmd_eval(const EvalArgs &a)
{
    if (a.split != "test" && a.split != "val" && a.split != "train" && a.split != "all")
        throw UsageError("--split must be test, val, train or all");
    if (!a.compare.empty() && a.compare.size() != a.ckpts.size())
        throw UsageError("--compare needs one checkpoint per --ckpt (paired by seed)");
    const auto m = open_manifest(a.manifest);
    const std::string mhash = hash_file(a.manifest);
    std::vector<eval::EvalReport> reports, others;
    for (const auto &p : a.ckpts)
        reports.push_back(evaluate_checkpoint(p, a, m, mhash));
    for (const auto &p : a.compare)
        others.push_back(evaluate_checkpoint(p, a, m, mhash));

    const json base = {{"protocol", reports.front().protocol},
                       {"split", a.split},
                       {"stress", reports.front().stress},
                       {"checkpoints", a.ckpts}};
    if (reports.size() > 1) {
        const json agg = eval::aggregate_seeds(reports);
        detail::write_file(a.out / "aggregate.json",
                           json{{"aggregate", agg}, {"provenance", provenance(base, reports.front().seed, mhash)}}
                                   .dump(2) +
                               "\n");
        std::cout << "macro-F1 mean " << agg["macro_f1"]["mean"].get<double>() << " sd "
                  << agg["macro_f1"]["sd"].get<double>() << " over " << reports.size() << " runs\n";
    }
    if (!others.empty()) {
        const auto cmp = eval::compare_reports(reports, others);
        json cfg = base;
        cfg["compared_with"] = a.compare;
        detail::write_file(a.out / "comparison.json",
                           json{{"comparison", eval::to_json_comparison(cmp)},
                                {"provenance", provenance(cfg, reports.front().seed, mhash)}}
                                   .dump(2) +
                               "\n");
        std::cout << "Wilcoxon W " << cmp.test.statistic << "  p " << cmp.test.p_value << "  ("
                  << (cmp.significant ? "significant" : "not significant") << " at alpha " << cmp.alpha << ")\n";
    }
    return 0;
}

// ------------------------------------------------------------------ explain

struct ExplainArgs {
    fs::path ckpt;
    fs::path manifest;
    std::string record_id;
    std::string cls;
    std::string layer;
    std::string leads = "II,V1";
    fs::path out;
    bool list_layers = false;
};

std::vector<std::size_t> lead_flag(const std::string &s)
{
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string name;
    while (std::getline(ss, name, ',')) {
        const auto it = std::find(synth::kLeadNames.begin(), synth::kLeadNames.end(), name);
        if (it == synth::kLeadNames.end())
            throw UsageError("unknown lead '" + name + "'");
        out.push_back(std::size_t(it - synth::kLeadNames.begin()));
    }
    if (out.empty())
        throw UsageError("--leads needs at least one lead name");
    return out;
}

int cmd_explain(const ExplainArgs &a)
{
    const Checkpoint cp = open_checkpoint(a.ckpt);
    Model<float> model(cp.config, 0);
    load_into(model, cp);
    if (a.list_layers) {
        for (const auto &n : model.conv_layer_names())
            std::cout << n << (n == model.default_cam_layer() ? "  (default)" : "") << "\n";
        return 0;
    }
    if (a.record_id.empty() || a.out.empty() || a.manifest.empty())
        throw UsageError("explain needs --manifest, --record-id and --out");
    std::optional<int> cls;
    if (!a.cls.empty()) {
        if (auto c = parse_class(a.cls))
            cls = int(*c);
        else if (std::all_of(a.cls.begin(), a.cls.end(), ::isdigit) && std::stoi(a.cls) < int(kNumClasses))
            cls = std::stoi(a.cls);
        else
            throw UsageError("--class must be a class name (N, AF, PAC, PVC, LBBB, RBBB, IAVB) or index");
    }
    std::optional<std::string> layer;
    if (!a.layer.empty()) {
        const auto names = model.conv_layer_names();
        if (std::find(names.begin(), names.end(), a.layer) == names.end())
            throw UsageError("unknown layer '" + a.layer + "' (see --list-layers)");
        layer = a.layer;
    }
    const auto leads = lead_flag(a.leads);
    const auto m = open_manifest(a.manifest);
    const ManifestEntry *e = m.find(a.record_id);
    if (!e)
        throw Error("unknown record id '" + a.record_id + "'");
    const EcgRecord rec = load_record(m, *e);
    std::mt19937_64 unused(0);
    const SignalMatrix w =
        dsp::preprocess(rec, {}, dsp::WindowSpec{cp.config.window, dsp::WindowMode::EvalCenter}, unused);
    const nn::Tensor<float> x(nn::Shape{1, w.n_leads, w.n_samples}, std::vector<float>(w.data.begin(), w.data.end()));
    const auto logits = model.predict_logits(x);
    const auto &lv = logits;
    const int predicted = int(std::max_element(lv.begin(), lv.end()) - lv.begin());
    const auto map = xai::grad_cam(model, x, cls, layer, rec.id);

    const json resolved = {{"checkpoint", a.ckpt.string()},
                           {"checkpoint_hash", hash_file(a.ckpt)},
                           {"record_id", rec.id},
                           {"true_class", class_name(rec.label)},
                           {"predicted_class", class_name(predicted)},
                           {"target_class", class_name(map.target_class)},
                           {"layer", map.layer},
                           {"no_positive_attribution", map.no_positive_attribution},
                           {"model", cp.config}};
    const json prov = provenance(resolved, cp.meta.seed, hash_file(a.manifest));
    if (!a.out.parent_path().empty())
        fs::create_directories(a.out.parent_path());
    detail::write_file(a.out, with_header(prov, xai::export_overlay(map, w, leads)));
    json side = map;
    side["provenance"] = prov;
    detail::write_file(sibling(a.out, ".saliency.json"), side.dump(2) + "\n");
    std::cout << rec.id << ": true " << class_name(rec.label) << ", predicted " << class_name(predicted)
              << ", explained " << class_name(map.target_class) << " at " << map.layer
              << (map.no_positive_attribution ? " (no positive attribution)" : "") << "\n";
    return 0;
}

// ------------------------------------------------------------------ bench

struct BenchArgs {
    fs::path ckpt;
    std::string variant = "full";
    std::string preset = "desk";
    int runs = 100;
    fs::path out;
};

int cmd_bench(const BenchArgs &a)
{
    if (a.runs < 10)
        throw UsageError("--runs must be >= 10");
    ModelConfig cfg;
    std::string source;
    if (!a.ckpt.empty()) {
        cfg = open_checkpoint(a.ckpt).config;
        source = a.ckpt.string();
    } else {
        cfg = resolve_configs(variant_flag(a.variant), a.preset, {}, std::uint64_t{0}, std::nullopt).model;
        source = "preset:" + a.preset;
    }
    Model<float> model(cfg, 0);
    const Efficiency e = model.efficiency(std::size_t(a.runs));
    std::cout << std::left << std::setw(14) << "variant" << std::setw(12) << "params" << std::setw(12) << "MFLOPs"
              << "median latency (ms)\n"
              << std::setw(14) << to_string(cfg.variant) << std::setw(12) << e.params << std::setw(12) << std::fixed
              << std::setprecision(2) << e.flops / 1e6 << std::setprecision(3) << e.latency_ms << "\n";
    if (!a.out.empty()) {
        const json resolved = {{"source", source}, {"model", cfg}, {"runs", a.runs}};
        const json r = {{"variant", to_string(cfg.variant)},
                        {"params", e.params},
                        {"flops", e.flops},
                        {"latency_ms_median", e.latency_ms},
                        {"runs", e.runs},
                        {"input", {{"leads", cfg.input_leads}, {"samples", cfg.window}}},
                        {"provenance", provenance(resolved, 0, "")}};
        if (!a.out.parent_path().empty())
            fs::create_directories(a.out.parent_path());
        detail::write_file(a.out, r.dump(2) + "\n");
    }
    return 0;
}

int run(int argc, char **argv)
{
    CLI::App app{"ECG arrhythmia classification: data synthesis, training, evaluation and explanation", "cardiodg"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads for data loading (0 = runtime default)")
        ->check(CLI::NonNegativeNumber);

    auto seed_opt = [](CLI::App *sub, std::optional<std::uint64_t> &target) {
        sub->add_option_function<std::string>(
               "--seed", [&target](const std::string &s) { target = parse_seed(s, "--seed"); },
               "Random seed (default: $CARDIO_DG_SEED, else 42)")
            ->type_name("INT");
    };

    SynthArgs sa;
    auto *synth_cmd = app.add_subcommand("synth", "Generate a synthetic multi-domain 12-lead dataset");
    synth_cmd->add_option("--out", sa.out, "Output directory")->required();
    synth_cmd->add_option("--domains", sa.domains, "Number of domains");
    synth_cmd->add_option("--records-per-domain", sa.records, "Records per domain");
    synth_cmd->add_option("--profile-file", sa.profile_file, "JSON array of domain profiles");
    synth_cmd->add_option("--mix", sa.mix, "Class mix: reference, balanced, or 7 comma-separated proportions");
    synth_cmd->add_option("--duration", sa.duration, "Record length in seconds");
    seed_opt(synth_cmd, sa.seed);

    TrainArgs ta;
    auto *train_cmd = app.add_subcommand("train", "Train one variant under a protocol");
    train_cmd->add_option("--manifest", ta.manifest, "Dataset manifest")->required();
    train_cmd->add_option("--variant", ta.variant, "baseline | intermediate | full")->required();
    train_cmd->add_option("--protocol", ta.protocol, "intra:DOMAIN, intra:ALL or lodo:TARGET");
    train_cmd->add_option("--config", ta.config, "JSON file with {\"model\": {...}, \"train\": {...}} overrides");
    train_cmd->add_option("--preset", ta.preset, "desk (CPU scale) or full-size");
    train_cmd->add_option("--out", ta.out, "Checkpoint path")->required();
    train_cmd->add_option_function<std::size_t>(
        "--epochs", [&ta](const std::size_t &n) { ta.epochs = n; }, "Override the epoch limit");
    train_cmd->add_flag("--quiet", ta.quiet, "No per-epoch progress");
    seed_opt(train_cmd, ta.seed);

    EvalArgs ea;
    auto *eval_cmd = app.add_subcommand("eval", "Evaluate checkpoints, optionally under stress or paired comparison");
    eval_cmd->add_option("--ckpt", ea.ckpts, "Checkpoint(s); several = independent seeds")->required();
    eval_cmd->add_option("--manifest", ea.manifest, "Dataset manifest")->required();
    eval_cmd->add_option("--protocol", ea.protocol, "Defaults to the protocol stored in the checkpoint");
    eval_cmd->add_option("--split", ea.split, "test | val | train | all");
    eval_cmd->add_option("--stress", ea.stress, "none | lead-drop:K | noise:SNR_DB");
    eval_cmd->add_option_function<std::string>(
        "--stress-seed", [&ea](const std::string &s) { ea.stress_seed = parse_seed(s, "--stress-seed"); },
        "Seed of the stress perturbation (default: training seed)");
    eval_cmd->add_option("--compare", ea.compare, "Checkpoints paired with --ckpt for a signed-rank test");
    eval_cmd->add_option("--out", ea.out, "Report directory");

    ExplainArgs xa;
    auto *explain_cmd = app.add_subcommand("explain", "Grad-CAM saliency overlay for one record");
    explain_cmd->add_option("--ckpt", xa.ckpt, "Checkpoint")->required();
    explain_cmd->add_option("--manifest", xa.manifest, "Dataset manifest");
    explain_cmd->add_option("--record-id", xa.record_id, "Record to explain");
    explain_cmd->add_option("--class", xa.cls, "Target class (default: predicted)");
    explain_cmd->add_option("--layer", xa.layer, "Convolution layer (default: deepest)");
    explain_cmd->add_option("--leads", xa.leads, "Comma-separated lead names in the overlay");
    explain_cmd->add_option("--out", xa.out, "Overlay CSV path");
    explain_cmd->add_flag("--list-layers", xa.list_layers, "Print the explainable layers and exit");

    BenchArgs ba;
    auto *bench_cmd = app.add_subcommand("bench", "Parameter count, FLOPs and single-record latency");
    bench_cmd->add_option("--ckpt", ba.ckpt, "Checkpoint (else --variant/--preset)");
    bench_cmd->add_option("--variant", ba.variant, "baseline | intermediate | full");
    bench_cmd->add_option("--preset", ba.preset, "desk or full-size");
    bench_cmd->add_option("--runs", ba.runs, "Timed forward passes (>= 10)");
    bench_cmd->add_option("--out", ba.out, "Optional JSON report path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return 2;
    }
#if defined(_OPENMP)
    if (threads > 0)
        omp_set_num_threads(threads);
#endif

    if (*synth_cmd)
        return cmd_synth(sa);
    if (*train_cmd)
        return cmd_train(ta);
    if (*eval_cmd)
        return cmd_eval(ea);
    if (*explain_cmd)
        return cmd_explain(xa);
    return cmd_bench(ba);
}

} // namespace

int main(int argc, char **argv)
{
#if defined(__GLIBC__)
    // Activation buffers are freed and reallocated every batch; keep them off
    // mmap so each step does not pay for fresh zeroed pages.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    try {
        return run(argc, argv);
    } catch (const UsageError &e) {
        std::cerr << "cardiodg: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "cardiodg: " << e.what() << "\n";
        return 1;
    }
}
