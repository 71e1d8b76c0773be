#include "mml/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mml/error.hpp"
#include "mml/eval.hpp"
#include "mml/model.hpp"
#include "mml/multiverse.hpp"

namespace mml::cli {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>> kKnownKeys{
    {"run", {"name", "out", "seed"}},
    {"data",
     {"preset", "name", "task", "classes", "col_first", "col_second", "col_label", "col_id",
      "header", "score_min", "score_max", "train", "dev", "lenient"}},
    {"encoder", {"feature_dim", "hidden", "output_dim"}},
    {"trainer",
     {"K", "gamma", "threshold", "alpha", "lambda", "batch_size", "epochs", "m", "prune"}},
};

std::string fmt_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string trim(std::string s) {
    auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string join_list(const std::vector<std::string>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + xs[i];
    return out;
}

// Typed accessors over the parsed tree; every failure names its field.
class Fields {
public:
    explicit Fields(const pt::ptree& tree) : tree_(tree) {}

    std::optional<std::string> text(const std::string& field) const {
        auto v = tree_.get_optional<std::string>(pt::ptree::path_type(field, '.'));
        if (!v) return std::nullopt;
        return trim(*v);
    }

    template <typename T>
    std::optional<T> number(const std::string& field) const {
        auto raw = text(field);
        if (!raw) return std::nullopt;
        try {
            std::size_t used = 0;
            T value{};
            if constexpr (std::is_floating_point_v<T>) {
                value = static_cast<T>(std::stod(*raw, &used));
            } else if constexpr (std::is_signed_v<T>) {
                value = static_cast<T>(std::stoll(*raw, &used));
            } else {
                if (!raw->empty() && raw->front() == '-') throw std::invalid_argument(*raw);
                value = static_cast<T>(std::stoull(*raw, &used));
            }
            if (used != raw->size()) throw std::invalid_argument(*raw);
            return value;
        } catch (const std::exception&) {
            throw ConfigError(field, "expected a number, got '" + *raw + "'");
        }
    }

    std::optional<bool> flag(const std::string& field) const {
        auto raw = text(field);
        if (!raw) return std::nullopt;
        if (*raw == "true" || *raw == "1" || *raw == "yes" || *raw == "on") return true;
        if (*raw == "false" || *raw == "0" || *raw == "no" || *raw == "off") return false;
        throw ConfigError(field, "expected true/false, got '" + *raw + "'");
    }

    std::optional<std::optional<int>> optional_column(const std::string& field) const {
        auto raw = text(field);
        if (!raw) return std::nullopt;
        if (raw->empty() || *raw == "none") return std::optional<int>{};
        return std::optional<int>{*number<int>(field)};
    }

private:
    const pt::ptree& tree_;
};

fs::path resolve_path(const std::string& value, const fs::path& base_dir) {
    fs::path p(value);
    if (p.is_relative()) p = base_dir / p;
    return p.lexically_normal();
}

ExperimentConfig parse_config_tree(const pt::ptree& tree, const fs::path& base_dir) {
    for (const auto& [section, body] : tree) {
        auto known = kKnownKeys.find(section);
        if (known == kKnownKeys.end()) {
            if (body.empty()) throw ConfigError(section, "key outside of any section");
            throw ConfigError(section, "unknown section");
        }
        for (const auto& [key, value] : body) {
            if (!known->second.count(key)) throw ConfigError(section + "." + key, "unknown key");
        }
    }
    Fields f(tree);
    ExperimentConfig cfg;

    if (auto v = f.text("run.name")) cfg.run_name = *v;
    if (auto v = f.text("run.out")) {
        cfg.out_dir = resolve_path(*v, base_dir);
    } else {
        cfg.out_dir = resolve_path("runs/" + cfg.run_name, base_dir);
    }
    if (auto v = f.number<std::uint64_t>("run.seed")) cfg.trainer.seed = *v;

    if (auto v = f.text("data.preset"); v && !v->empty()) {
        try {
            cfg.data = glue_preset(*v);
        } catch (const InvalidConfig& e) {
            throw ConfigError("data.preset", e.what());
        }
        cfg.preset = cfg.data.name;
    } else {
        cfg.data = canonical_spec("dataset", TaskKind::classification(2), {"0", "1"});
        cfg.data.score_min = 0.0;
        cfg.data.score_max = 5.0;
    }
    if (auto v = f.text("data.name")) cfg.data.name = *v;
    if (auto v = f.text("data.task")) {
        if (*v == "regression") {
            cfg.data.kind = TaskKind::regression();
            cfg.data.class_names.clear();
        } else if (*v == "classification") {
            cfg.data.kind = TaskKind::classification(std::max<std::size_t>(cfg.data.class_names.size(), 2));
        } else {
            throw ConfigError("data.task", "expected classification or regression, got '" + *v + "'");
        }
    }
    if (auto v = f.text("data.classes")) {
        cfg.data.class_names = split_list(*v);
        if (!cfg.data.kind.is_regression()) cfg.data.kind = TaskKind::classification(cfg.data.class_names.size());
    }
    if (auto v = f.number<int>("data.col_first")) cfg.data.col_first = *v;
    if (auto v = f.optional_column("data.col_second")) cfg.data.col_second = *v;
    if (auto v = f.number<int>("data.col_label")) cfg.data.col_label = *v;
    if (auto v = f.optional_column("data.col_id")) cfg.data.col_id = *v;
    if (auto v = f.flag("data.header")) cfg.data.header = *v;
    if (auto v = f.number<double>("data.score_min")) cfg.data.score_min = *v;
    if (auto v = f.number<double>("data.score_max")) cfg.data.score_max = *v;
    if (auto v = f.flag("data.lenient")) cfg.lenient = *v;
    try {
        cfg.data.validate();
    } catch (const InvalidConfig& e) {
        throw ConfigError("data", e.what());
    }

    auto train = f.text("data.train");
    if (!train || train->empty()) throw ConfigError("data.train", "required");
    cfg.train_path = resolve_path(*train, base_dir);
    if (auto v = f.text("data.dev"); v && !v->empty()) cfg.dev_path = resolve_path(*v, base_dir);

    if (auto v = f.number<std::size_t>("encoder.feature_dim")) cfg.encoder.feature_dim = *v;
    if (auto v = f.text("encoder.hidden")) {
        cfg.encoder.hidden_dims.clear();
        for (const auto& item : split_list(*v)) {
            try {
                std::size_t used = 0;
                auto width = std::stoull(item, &used);
                if (used != item.size() || width == 0) throw std::invalid_argument(item);
                cfg.encoder.hidden_dims.push_back(static_cast<std::size_t>(width));
            } catch (const std::exception&) {
                throw ConfigError("encoder.hidden", "expected comma-separated positive widths, got '" + *v + "'");
            }
        }
    }
    if (auto v = f.number<std::size_t>("encoder.output_dim")) cfg.encoder.output_dim = *v;
    if (cfg.encoder.feature_dim < 1) throw ConfigError("encoder.feature_dim", "must be >= 1");
    if (cfg.encoder.output_dim < 1) throw ConfigError("encoder.output_dim", "must be >= 1");

    auto& t = cfg.trainer;
    if (auto v = f.number<std::size_t>("trainer.K")) t.K = *v;
    if (auto v = f.number<double>("trainer.gamma")) t.gamma = *v;
    if (auto v = f.number<std::size_t>("trainer.threshold")) t.threshold = *v;
    if (auto v = f.number<double>("trainer.alpha")) t.alpha = *v;
    if (auto v = f.number<double>("trainer.lambda")) t.lambda = *v;
    if (auto v = f.number<std::size_t>("trainer.batch_size")) t.batch_size = *v;
    if (auto v = f.number<std::size_t>("trainer.epochs")) t.epochs = *v;
    if (auto v = f.number<std::size_t>("trainer.m")) t.m = *v;
    if (auto v = f.flag("trainer.prune")) t.prune_enabled = *v;
    t.kind = cfg.data.kind;
    try {
        t.validate();
    } catch (const InvalidConfig& e) {
        throw ConfigError("trainer", e.what());
    }
    return cfg;
}

std::string fingerprint(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char ch;
    while (is.get(ch)) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc | std::ios::binary);
    if (!os) throw InvalidInput("cannot write " + path.string());
    os << text;
}

bool any_exists(const std::vector<fs::path>& paths) {
    return std::any_of(paths.begin(), paths.end(), [](const fs::path& p) { return fs::exists(p); });
}

std::string model_id_for(const LoadedCheckpoint& ckpt, const fs::path& path) {
    if (ckpt.config_echo.is_object() && ckpt.config_echo.contains("run") &&
        ckpt.config_echo["run"].contains("name")) {
        return ckpt.config_echo["run"]["name"].get<std::string>();
    }
    return path.stem().string();
}

Dataset load_for_model(const fs::path& dataset, const std::optional<std::string>& preset,
                       const Model& model) {
    DatasetSpec spec = preset ? glue_preset(*preset)
                              : canonical_spec(model.dataset_name, model.kind, model.class_names);
    return load_tsv(dataset, spec);
}

void print_reports(std::ostream& out, const std::vector<EvalReport>& reports) {
    out << "model\tdataset\tsplit\tmetric\tvalue\tn\tactive_heads\ttransform\n";
    for (const auto& r : reports) {
        out << r.model << '\t' << r.dataset << '\t' << r.split << '\t' << r.metric << '\t'
            << fmt_real(r.value) << '\t' << r.n << '\t' << r.active_heads << '\t'
            << r.transform_chain << '\n';
    }
}

// Maps exceptions to exit codes: config/usage problems are 1, the rest 2.
template <typename Body>
int guarded(std::ostream& err, const char* command, Body&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << command << ": config error in " << e.what() << '\n';
        return kUsageError;
    } catch (const InvalidConfig& e) {
        err << command << ": " << e.what() << '\n';
        return kUsageError;
    } catch (const InvalidTransform& e) {
        err << command << ": refused: " << e.what() << '\n';
        return kUsageError;
    } catch (const InvalidEval& e) {
        err << command << ": refused: " << e.what() << '\n';
        return kUsageError;
    } catch (const pt::ini_parser_error& e) {
        err << command << ": config parse error at line " << e.line() << ": " << e.message() << '\n';
        return kUsageError;
    } catch (const FormatError& e) {
        err << command << ": incompatible or malformed input: " << e.what() << '\n';
        return kRuntimeError;
    } catch (const std::exception& e) {
        err << command << ": " << e.what() << '\n';
        return kRuntimeError;
    }
}

}  // namespace

nlohmann::ordered_json ExperimentConfig::echo() const {
    auto col = [](const std::optional<int>& c) { return c ? std::to_string(*c) : std::string("none"); };
    nlohmann::ordered_json j;
    j["run"] = {{"name", run_name}, {"out", out_dir.string()}, {"seed", std::to_string(trainer.seed)}};
    j["data"] = {
        {"preset", preset},
        {"name", data.name},
        {"task", data.kind.is_regression() ? "regression" : "classification"},
        {"classes", join_list(data.class_names)},
        {"col_first", std::to_string(data.col_first)},
        {"col_second", col(data.col_second)},
        {"col_label", std::to_string(data.col_label)},
        {"col_id", col(data.col_id)},
        {"header", data.header ? "true" : "false"},
        {"score_min", fmt_real(data.score_min)},
        {"score_max", fmt_real(data.score_max)},
        {"train", train_path.string()},
        {"dev", dev_path ? dev_path->string() : std::string()},
        {"lenient", lenient ? "true" : "false"},
    };
    std::vector<std::string> hidden;
    for (auto h : encoder.hidden_dims) hidden.push_back(std::to_string(h));
    j["encoder"] = {{"feature_dim", std::to_string(encoder.feature_dim)},
                    {"hidden", join_list(hidden)},
                    {"output_dim", std::to_string(encoder.output_dim)}};
    j["trainer"] = {{"K", std::to_string(trainer.K)},
                    {"gamma", fmt_real(trainer.gamma)},
                    {"threshold", std::to_string(trainer.threshold)},
                    {"alpha", fmt_real(trainer.alpha)},
                    {"lambda", fmt_real(trainer.lambda)},
                    {"batch_size", std::to_string(trainer.batch_size)},
                    {"epochs", std::to_string(trainer.epochs)},
                    {"m", std::to_string(trainer.m)},
                    {"prune", trainer.prune_enabled ? "true" : "false"}};
    return j;
}

ExperimentConfig parse_config_ini(const std::string& text, const fs::path& base_dir) {
    std::istringstream is(text);
    pt::ptree tree;
    pt::ini_parser::read_ini(is, tree);
    return parse_config_tree(tree, base_dir);
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("--config", "cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    const fs::path base = fs::absolute(path).parent_path();

    auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        nlohmann::json manifest;
        try {
            manifest = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("--config", std::string("manifest is not valid JSON: ") + e.what());
        }
        if (manifest.value("format", "") != "mml-run-manifest") {
            throw ConfigError("format", "not a run manifest");
        }
        if (manifest.value("version", 0) != kManifestVersion) {
            throw ConfigError("version", "unsupported manifest version");
        }
        pt::ptree tree;
        for (const auto& [section, body] : manifest.at("config").items()) {
            for (const auto& [key, value] : body.items()) {
                tree.put(pt::ptree::path_type(section + "." + key, '.'), value.get<std::string>());
            }
        }
        return parse_config_tree(tree, base);
    }
    try {
        return parse_config_ini(text, base);
    } catch (pt::ini_parser_error& e) {
        throw pt::ini_parser_error(e.message(), path.string(), e.line());
    }
}

nlohmann::ordered_json make_manifest(const ExperimentConfig& config) {
    nlohmann::ordered_json m;
    m["format"] = "mml-run-manifest";
    m["version"] = kManifestVersion;
    m["checkpoint_format_version"] = kCheckpointVersion;
    m["trace_format_version"] = kTraceFormatVersion;
    m["seed"] = config.trainer.seed;
    m["config"] = config.echo();
    nlohmann::ordered_json prints;
    prints["train"] = fingerprint(config.train_path);
    if (config.dev_path) prints["dev"] = fingerprint(*config.dev_path);
    m["data_fingerprint"] = prints;
    return m;
}

std::vector<CrossTarget> load_targets(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("--targets", "cannot open " + path.string());
    const fs::path base = fs::absolute(path).parent_path();
    std::vector<CrossTarget> targets;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty() || trim(line)[0] == '#') continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, '\t')) cols.push_back(trim(col));
        const std::string where = path.string() + ":" + std::to_string(line_no);
        if (cols.size() != 5) {
            throw ConfigError(where, "expected name, preset, transform, train path, dev path (tab-separated)");
        }
        CrossTarget t;
        t.name = cols[0];
        if (cols[2].empty()) throw ConfigError(where, "target '" + t.name + "' names no transform");
        try {
            t.transform = parse_transform(cols[2]);
        } catch (const InvalidConfig& e) {
            throw ConfigError(where, e.what());
        }
        DatasetSpec spec = glue_preset(cols[1]);
        auto load = [&](const std::string& p) -> std::optional<Dataset> {
            if (p == "-" || p.empty()) return std::nullopt;
            fs::path full = resolve_path(p, base);
            if (!fs::exists(full)) throw ConfigError(where, "file not found: " + full.string());
            return load_tsv(full, spec);
        };
        t.train = load(cols[3]);
        t.dev = load(cols[4]);
        targets.push_back(std::move(t));
    }
    if (targets.empty()) throw ConfigError("--targets", "no targets listed in " + path.string());
    return targets;
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, "train", [&] {
        ExperimentConfig cfg = load_config(args.config);
        if (args.out) cfg.out_dir = fs::absolute(*args.out).lexically_normal();
        if (args.seed) cfg.trainer.seed = *args.seed;
        if (!fs::exists(cfg.train_path)) {
            throw ConfigError("data.train", "file not found: " + cfg.train_path.string());
        }
        if (cfg.dev_path && !fs::exists(*cfg.dev_path)) {
            throw ConfigError("data.dev", "file not found: " + cfg.dev_path->string());
        }

        const fs::path dir = cfg.out_dir;
        const std::vector<fs::path> outputs{dir / "model.ckpt", dir / "best.ckpt", dir / "trace.csv",
                                            dir / "prune_events.csv", dir / "prune_ema.csv",
                                            dir / "manifest.json"};
        if (!args.force && any_exists(outputs)) {
            throw ConfigError("run.out", dir.string() + " already holds run outputs; pass --force to overwrite");
        }

        LoadReport report;
        Dataset train_set = load_tsv(cfg.train_path, cfg.data, cfg.lenient, &report);
        for (const auto& s : report.skipped) err << "train: skipped " << cfg.train_path.string() << " " << s << '\n';
        std::optional<Dataset> dev_set;
        if (cfg.dev_path) dev_set = load_tsv(*cfg.dev_path, cfg.data, cfg.lenient);

        DevMetric metric;
        if (dev_set) {
            metric = [&](const Model& m) {
                return evaluate(m, *dev_set, EvalOptions{cfg.run_name, "dev", "identity", args.workers}).value;
            };
        }
        TrainResult result = train(cfg.trainer, cfg.encoder, train_set, metric);

        fs::create_directories(dir);
        const auto echo = nlohmann::json::parse(cfg.echo().dump());
        save_checkpoint(result.model, echo, dir / "model.ckpt");
        if (result.best) save_checkpoint(*result.best, echo, dir / "best.ckpt");
        write_trace_csv(result.trace, dir / "trace.csv");
        write_prune_csv(result.trace, dir / "prune_events.csv");
        write_prune_ema_csv(result.trace, dir / "prune_ema.csv");
        write_orthogonality_csv(orthogonality_tables(result.model.heads), dir / "orthogonality");
        write_text(dir / "manifest.json", make_manifest(cfg).dump(2) + "\n");

        const auto& last = result.trace.steps.back();
        out << "run " << cfg.run_name << ": " << result.trace.steps.size() << " steps, "
            << result.trace.prunes.size() << " prune events, " << last.active_heads << "/"
            << result.model.heads.m() << " heads active, final loss " << fmt_real(last.total_loss) << '\n';
        if (result.best) {
            out << "best dev metric " << fmt_real(result.best_metric) << " at step " << result.best_step << '\n';
        }
        out << "outputs written to " << dir.string() << '\n';
        return static_cast<int>(kSuccess);
    });
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, "eval", [&] {
        const Transform transform = parse_transform(args.transform);
        if (!fs::exists(args.checkpoint)) throw ConfigError("--checkpoint", "file not found: " + args.checkpoint.string());
        if (!fs::exists(args.dataset)) throw ConfigError("--dataset", "file not found: " + args.dataset.string());
        const fs::path report_path = args.out ? *args.out : args.checkpoint.parent_path() / "eval_report.jsonl";
        if (!args.force && fs::exists(report_path)) {
            throw ConfigError("--out", report_path.string() + " exists; pass --force to overwrite");
        }

        LoadedCheckpoint ckpt = load_checkpoint(args.checkpoint);
        Dataset data = load_for_model(args.dataset, args.preset, ckpt.model);
        Dataset transformed = apply_transform(data, transform);
        EvalReport report = evaluate(ckpt.model, transformed,
                                     EvalOptions{model_id_for(ckpt, args.checkpoint), args.split,
                                                 to_string(transform), args.workers});
        print_reports(out, {report});
        if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
        write_text(report_path, to_json_line(report) + "\n");
        return static_cast<int>(kSuccess);
    });
}

int cmd_cross_eval(const CrossEvalArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, "cross-eval", [&] {
        if (args.checkpoints.empty() || args.checkpoints.size() > 2) {
            throw ConfigError("--checkpoint", "give one checkpoint, or a baseline and a candidate");
        }
        const fs::path reports_path = args.out / "cross_reports.jsonl";
        const fs::path summary_path = args.out / "cross_summary.txt";
        if (!args.force && any_exists({reports_path, summary_path})) {
            throw ConfigError("--out", args.out.string() + " already holds cross-eval outputs; pass --force to overwrite");
        }
        for (const auto& c : args.checkpoints) {
            if (!fs::exists(c)) throw ConfigError("--checkpoint", "file not found: " + c.string());
        }
        auto targets = load_targets(args.targets);

        std::vector<std::string> ids, sources, target_names;
        std::vector<std::vector<EvalReport>> all;
        for (const auto& t : targets) target_names.push_back(t.name);
        for (const auto& path : args.checkpoints) {
            LoadedCheckpoint ckpt = load_checkpoint(path);
            std::string id = model_id_for(ckpt, path);
            if (std::find(ids.begin(), ids.end(), id) != ids.end()) id += "#" + std::to_string(ids.size() + 1);
            ids.push_back(id);
            sources.push_back(ckpt.model.dataset_name);
            all.push_back(cross_evaluate(ckpt.model, id, targets, args.workers));
        }

        fs::create_directories(args.out);
        std::string lines;
        for (const auto& reports : all) {
            for (const auto& r : reports) lines += to_json_line(r) + "\n";
        }
        write_text(reports_path, lines);
        const std::string table = format_cross_table(ids, sources, all, target_names);
        write_text(summary_path, table);
        for (const auto& reports : all) print_reports(out, reports);
        out << '\n' << table;
        return static_cast<int>(kSuccess);
    });
}

int cmd_trace(const TraceArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, "trace", [&] {
        const fs::path trace_path = args.run_dir / "trace.csv";
        const fs::path events_path = args.run_dir / "prune_events.csv";
        const fs::path ema_path = args.run_dir / "prune_ema.csv";
        for (const auto& p : {trace_path, events_path, ema_path}) {
            if (!fs::exists(p)) throw ConfigError("--run", "missing trace file " + p.string());
        }
        const fs::path dir = args.out ? *args.out : args.run_dir / "plot";
        const fs::path segments_path = dir / "active_heads.csv";
        const fs::path heads_path = dir / "prune_heads.csv";
        if (!args.force && any_exists({segments_path, heads_path})) {
            throw ConfigError("--out", dir.string() + " already holds trace outputs; pass --force to overwrite");
        }

        auto steps = read_trace_csv(trace_path);
        auto events = read_prune_csv(events_path);
        if (steps.empty()) throw FormatError(trace_path.string() + " has no steps");

        std::string segments = "segment,start_step,end_step,active_heads\n";
        std::size_t seg = 0;
        std::size_t start = steps.front().step;
        for (std::size_t i = 0; i < steps.size(); ++i) {
            bool last = i + 1 == steps.size();
            // The record of a prune step already carries the reduced count.
            if (last || steps[i + 1].active_heads != steps[i].active_heads) {
                segments += std::to_string(seg) + "," + std::to_string(start) + "," +
                            std::to_string(steps[i].step) +
                            "," + std::to_string(steps[i].active_heads) + "\n";
                ++seg;
                if (!last) start = steps[i + 1].step;
            }
        }

        // Re-label the per-head EMA table and check it against the event file.
        std::ifstream is(ema_path);
        std::string line;
        std::getline(is, line);
        if (line != "step,head,ema,status") throw FormatError(ema_path.string() + ": unexpected header");
        std::map<std::size_t, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> seen;
        std::string heads = "step,head,ema,status\n";
        std::size_t rows = 0;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            std::vector<std::string> f;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) f.push_back(cell);
            if (f.size() != 4 || (f[3] != "survivor" && f[3] != "eliminated")) {
                throw FormatError(ema_path.string() + ": malformed row '" + line + "'");
            }
            std::size_t step = std::stoull(f[0]);
            std::size_t head = std::stoull(f[1]);
            (f[3] == "survivor" ? seen[step].first : seen[step].second).push_back(head);
            heads += line + "\n";
            ++rows;
        }
        if (seen.size() != events.size()) {
            throw FormatError("prune_ema.csv and prune_events.csv list different prune steps");
        }
        for (const auto& e : events) {
            auto it = seen.find(e.step);
            if (it == seen.end() || it->second.first != e.survivors || it->second.second != e.eliminated) {
                throw FormatError("prune_ema.csv disagrees with prune_events.csv at step " + std::to_string(e.step));
            }
        }

        fs::create_directories(dir);
        write_text(segments_path, segments);
        write_text(heads_path, heads);
        out << seg << " active-head segments, " << events.size() << " prune events (" << rows
            << " labelled head rows) written to " << dir.string() << '\n';
        return static_cast<int>(kSuccess);
    });
}

}  // namespace mml::cli
