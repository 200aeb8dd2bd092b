#include "cli/commands.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <memory>

#include "CLI11.hpp"
#include "cli/config.hpp"
#include "cli/plot.hpp"
#include "patchkit/blackbox.hpp"
#include "patchkit/image_io.hpp"
#include "patchkit/patch_io.hpp"
#include "patchkit/toy_detector.hpp"

namespace patchkit::cli {

namespace {

using nlohmann::json;

struct Overrides {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
};

// Stands in for a victim that could not be started, so its cells fail alone.
class UnavailableDetector : public Detector {
public:
    UnavailableDetector(std::string name, std::string reason) : name_(std::move(name)), reason_(std::move(reason)) {}
    std::string name() const override { return name_; }
    DetectorOutput detect(const SceneImage&) override { throw Error(reason_); }

private:
    std::string name_;
    std::string reason_;
};

// Resolved config plus the dataset it names.
struct Run {
    RunConfig cfg;
    json config_echo;
    Dataset dataset;
    std::string hash;
};

Run prepare(const Overrides& o) {
    Run run;
    run.cfg = load_config(o.config);
    if (!o.out.empty()) run.cfg.out = o.out;
    if (o.seed) run.cfg.train.seed = *o.seed;
    if (o.jobs) run.cfg.train.jobs = *o.jobs;
    run.cfg.train.checkpoint_dir = run.cfg.out / "checkpoints";
    validate_config(run.cfg);
    std::error_code ec;
    std::filesystem::create_directories(run.cfg.out, ec);
    if (ec || !std::filesystem::is_directory(run.cfg.out))
        throw ConfigError("out: cannot create output directory " + run.cfg.out.string());

    const auto& d = run.cfg.dataset;
    switch (d.format) {
        case DatasetFormat::CocoJson: run.dataset = load_coco(d.annotations, d.images, d.person_category_id); break;
        case DatasetFormat::BoxfileDir: run.dataset = load_boxfile_dir(d.images, d.boxes); break;
        case DatasetFormat::Synthetic:
            run.dataset = generate_synthetic(d.synthetic, ToyDetectorParams::standard(run.cfg.toy_seed));
            break;
    }
    run.config_echo = resolved_config(run.cfg);
    run.hash = dataset_hash(run.dataset);
    return run;
}

std::unique_ptr<Detector> make_detector(const std::string& name, const std::string& spec, const RunConfig& cfg) {
    if (spec == "toy") {
        AttackThresholds th = cfg.train.thresholds;
        th.det = cfg.eval.tau_det;
        return std::make_unique<ToyEvalDetector>(name, ToyDetectorParams::standard(cfg.toy_seed), th);
    }
    const std::string command = spec.substr(std::string("blackbox:").size());
    const auto scratch = cfg.out / "scratch" / name;
    std::filesystem::create_directories(scratch);
    const auto timeout = std::chrono::milliseconds(static_cast<long long>(cfg.adapter_timeout_seconds * 1000.0));
    return std::make_unique<BlackboxDetector>(name, command, scratch, cfg.eval.tau_det, timeout);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

void write_json(const std::filesystem::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

std::vector<PngText> png_metadata(const Run& run, const std::string& title) {
    return {{"Title", title}, {"Config", run.config_echo.dump()}, {"DatasetSHA256", run.hash}};
}

std::string csv_preamble(const Run& run) {
    return "# config: " + run.config_echo.dump() + "\n# dataset_sha256: " + run.hash + "\n";
}

std::string fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

json breakdown_json(const LossBreakdown& b) {
    return {{"det", b.det}, {"iou", b.iou}, {"nms", b.nms}, {"app", b.app}, {"total", b.total}};
}

int cmd_train(const Overrides& o, std::ostream& out) {
    Run run = prepare(o);
    auto& cfg = run.cfg;
    if (cfg.detector != "toy")
        throw ConfigError("detector: training needs the differentiable toy detector, got '" + cfg.detector + "'");

    const ToyDetector detector(ToyDetectorParams::standard(cfg.toy_seed));
    const std::size_t n = run.dataset.records.size();
    const std::size_t per_epoch = (n + static_cast<std::size_t>(cfg.train.batch_size) - 1) /
                                  static_cast<std::size_t>(cfg.train.batch_size);
    const TrainResult result = train(run.dataset, detector, cfg.train, [&](const TrainState& s, std::uint64_t epoch) {
        if (per_epoch && s.step % per_epoch == 0)
            out << "epoch " << epoch + 1 << "/" << cfg.train.epochs << " total " << fixed(s.history.back().total) << "\n";
    });

    save_patch(cfg.out / "patch.tpch", result.patch);
    write_png(cfg.out / "patch.png", result.patch, png_metadata(run, "patch"));

    json steps = json::array();
    for (std::size_t i = 0; i < result.history.size(); ++i) {
        json s = breakdown_json(result.history[i]);
        s["step"] = i + 1;
        s["epoch"] = per_epoch ? i / per_epoch : 0;
        steps.push_back(s);
    }
    const auto means = epoch_mean_totals(result.history, per_epoch);
    write_json(cfg.out / "loss_history.json",
               {{"config", run.config_echo}, {"dataset_sha256", run.hash}, {"steps", steps}, {"epoch_mean_total", means}});

    std::vector<std::vector<double>> series(5);
    for (const auto& b : result.history) {
        series[0].push_back(b.total);
        series[1].push_back(b.det);
        series[2].push_back(b.iou);
        series[3].push_back(b.nms);
        series[4].push_back(b.app);
    }
    write_png(cfg.out / "loss_curve.png", line_plot(series),
              png_metadata(run, "loss per step: total, det, iou, nms, app"));
    out << "wrote " << (cfg.out / "patch.tpch").string() << "\n";
    return kOk;
}

json report_json(const EvalReport& r) {
    json per_image = json::array();
    for (const auto& im : r.per_image)
        per_image.push_back({{"image_id", im.image_id},
                             {"pseudo_gt", im.pseudo_gt},
                             {"matched", im.matched},
                             {"false_positives", im.false_positives},
                             {"excluded", im.excluded}});
    return {{"ap_person", r.ap_person ? json(*r.ap_person) : json(nullptr)},
            {"asr", r.asr},
            {"no_pseudo_gt", r.no_pseudo_gt},
            {"per_image", per_image}};
}

int cmd_eval(const Overrides& o, const std::string& patch_path, bool no_patch, std::ostream& out) {
    Run run = prepare(o);
    std::optional<Patch> patch;
    if (!no_patch) {
        try {
            patch = load_patch(patch_path);
        } catch (const Error& e) {
            throw ConfigError(std::string("--patch: ") + e.what());
        }
    }
    auto detector = make_detector(run.cfg.detector == "toy" ? "toy" : "blackbox", run.cfg.detector, run.cfg);
    const EvalReport r = evaluate_patch(*detector, run.dataset.records, patch ? &*patch : nullptr,
                                        run.cfg.train.placement, run.cfg.eval, run.cfg.train.jobs);
    json doc = report_json(r);
    doc["config"] = run.config_echo;
    doc["dataset_sha256"] = run.hash;
    doc["patch"] = no_patch ? json(nullptr) : json(std::filesystem::path(patch_path).filename().string());
    write_json(run.cfg.out / "eval_report.json", doc);
    if (r.no_pseudo_gt) {
        out << "no pseudo-GT: the detector found nothing on the clean scenes\n";
        return kRuntimeFailure;
    }
    out << "ap_person=" << fixed(*r.ap_person) << " asr=" << fixed(r.asr) << "\n";
    return kOk;
}

int cmd_transfer(const Overrides& o, const std::string& patch_dir, std::ostream& out, std::ostream& err) {
    Run run = prepare(o);
    std::map<std::string, Patch> patches;
    if (!std::filesystem::is_directory(patch_dir)) throw ConfigError("--patch-dir: not a directory: " + patch_dir);
    for (const auto& e : std::filesystem::directory_iterator(patch_dir)) {
        if (e.path().extension() != ".tpch") continue;
        try {
            patches.emplace(e.path().stem().string(), load_patch(e.path()));
        } catch (const Error& ex) {
            throw ConfigError(std::string("--patch-dir: ") + ex.what());
        }
    }
    if (patches.empty()) throw ConfigError("--patch-dir: no .tpch patches in " + patch_dir);

    std::vector<std::unique_ptr<Detector>> owned;
    std::map<std::string, Detector*> victims;
    for (const auto& [name, spec] : run.cfg.victims) {
        try {
            owned.push_back(make_detector(name, spec, run.cfg));
        } catch (const Error& e) {
            owned.push_back(std::make_unique<UnavailableDetector>(name, e.what()));
        }
        victims[name] = owned.back().get();
    }
    const TransferMatrix m =
        transfer_matrix(patches, victims, run.dataset.records, run.cfg.train.placement, run.cfg.eval);

    std::string csv = csv_preamble(run) + "trained_on";
    for (const auto& v : m.victims) csv += "," + v;
    csv += "\n";
    std::vector<std::vector<std::optional<double>>> grid;
    for (std::size_t r = 0; r < m.trained_on.size(); ++r) {
        csv += m.trained_on[r];
        grid.emplace_back();
        for (std::size_t c = 0; c < m.victims.size(); ++c) {
            const auto& cell = m.cells[r][c];
            csv += "," + (cell.ap_person ? fixed(*cell.ap_person) : std::string("NA"));
            grid.back().push_back(cell.ap_person);
            if (!cell.error.empty())
                err << "cell (" << m.trained_on[r] << ", " << m.victims[c] << ") unavailable: " << cell.error << "\n";
        }
        csv += "\n";
    }
    write_text(run.cfg.out / "transfer_matrix.csv", csv);
    write_png(run.cfg.out / "transfer_heatmap.png", heatmap(grid, 100.0),
              png_metadata(run, "ap_person, rows trained-on, columns victims"));
    out << m.computed_cells() << " of " << m.trained_on.size() * m.victims.size() << " cells computed\n";
    return m.computed_cells() > 0 ? kOk : kRuntimeFailure;
}

int cmd_ablate(const Overrides& o, const std::string& axis_name, std::ostream& out) {
    AblationAxis axis;
    try {
        axis = parse_ablation_axis(axis_name);
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("--axis: ") + e.what());
    }
    Run run = prepare(o);
    if (run.cfg.detector != "toy")
        throw ConfigError("detector: ablation trains patches and needs the toy detector");
    const ToyDetector train_detector(ToyDetectorParams::standard(run.cfg.toy_seed));
    auto victim = make_detector("toy", "toy", run.cfg);
    const auto points = ablation_points(axis, run.cfg.train, run.cfg.ablation);

    const std::string name = "ablation_" + to_string(axis);
    std::vector<AblationRow> rows;
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto row = run_ablation(std::span(points).subspan(i, 1), run.dataset, train_detector, *victim, run.cfg.eval);
        rows.push_back(row.front());
        const auto& r = rows.back();
        out << r.setting << ": " << (r.ap_person ? "ap_person=" + fixed(*r.ap_person) : "failed: " + r.error) << "\n";

        // Rewritten after every point so an interrupted sweep keeps its rows.
        std::string csv = csv_preamble(run) + "setting,ap_person,asr,error\n";
        for (const auto& x : rows)
            csv += "\"" + x.setting + "\"," + (x.ap_person ? fixed(*x.ap_person) : "NA") + "," +
                   (x.ap_person ? fixed(x.asr) : "NA") + ",\"" + x.error + "\"\n";
        write_text(run.cfg.out / (name + ".csv"), csv);
    }
    std::vector<std::optional<double>> values;
    for (const auto& r : rows) values.push_back(r.ap_person);
    const RgbImage plot =
        axis == AblationAxis::Epochs ? line_plot({[&] {
            std::vector<double> v;
            for (const auto& r : rows) v.push_back(r.ap_person.value_or(std::nan("")));
            return v;
        }()})
                                     : bar_plot(values, 100.0);
    write_png(run.cfg.out / (name + ".png"), plot, png_metadata(run, "ap_person by " + to_string(axis)));
    return kOk;
}

}  // namespace

std::string dataset_hash(const Dataset& dataset) {
    std::unique_ptr<EVP_MD_CTX, void (*)(EVP_MD_CTX*)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 unavailable");
    const auto feed = [&](const std::string& s) { EVP_DigestUpdate(ctx.get(), s.data(), s.size()); };
    std::vector<std::uint8_t> bytes;
    for (const auto& r : dataset.records) {
        feed(r.id + "\n" + std::to_string(r.image.height()) + "x" + std::to_string(r.image.width()) + "\n");
        bytes.resize(r.image.size());
        const auto v = r.image.values();
        for (std::size_t i = 0; i < v.size(); ++i) bytes[i] = quantize_unit(v[i]);
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size());
        for (const auto& b : r.person_boxes) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g\n", b.x1, b.y1, b.x2, b.y2);
            feed(buf);
        }
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Adversarial patch training and evaluation", "patchkit"};
    app.require_subcommand(1);
    Overrides o;
    std::uint64_t seed = 0;
    int jobs = 1;
    const auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "Run configuration (JSON)")->required();
        sub->add_option("--out", o.out, "Output directory (overrides config)");
        sub->add_option("--seed", seed, "Random seed (overrides config)");
        sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    };
    CLI::App* train_cmd = app.add_subcommand("train", "Optimize a patch against the toy detector");
    common(train_cmd);
    CLI::App* eval_cmd = app.add_subcommand("eval", "Score a patch under the pseudo ground truth protocol");
    common(eval_cmd);
    std::string patch_path;
    bool no_patch = false;
    auto* patch_opt = eval_cmd->add_option("--patch", patch_path, "Patch sidecar (.tpch)");
    auto* no_patch_opt = eval_cmd->add_flag("--no-patch", no_patch, "Evaluate clean scenes against themselves");
    patch_opt->excludes(no_patch_opt);
    CLI::App* transfer_cmd = app.add_subcommand("transfer", "Evaluate every patch against every victim");
    common(transfer_cmd);
    std::string patch_dir;
    transfer_cmd->add_option("--patch-dir", patch_dir, "Directory of .tpch patches")->required();
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "Sweep one setting and record ap_person");
    common(ablate_cmd);
    std::string axis;
    ablate_cmd->add_option("--axis", axis, "epochs, patch-size, loss-terms, loss-weights or seeds")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kConfigError;
    }
    for (CLI::App* sub : {train_cmd, eval_cmd, transfer_cmd, ablate_cmd}) {
        if (sub->count("--seed")) o.seed = seed;
        if (sub->count("--jobs")) o.jobs = jobs;
    }

    try {
        if (*train_cmd) return cmd_train(o, out);
        if (*eval_cmd) {
            if (!no_patch && patch_path.empty()) throw ConfigError("eval needs --patch PATH or --no-patch");
            return cmd_eval(o, patch_path, no_patch, out);
        }
        if (*transfer_cmd) return cmd_transfer(o, patch_dir, out, err);
        if (*ablate_cmd) return cmd_ablate(o, axis, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const InvalidArgument& e) {
        err << "invalid argument: " << e.what() << "\n";
        return kConfigError;
    } catch (const AdapterError& e) {
        err << "detector adapter failed: " << e.what() << "\n";
        return kAdapterFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeFailure;
    }
    return kRuntimeFailure;
}

}  // namespace patchkit::cli
