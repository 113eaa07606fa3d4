// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the hbwave Project.

// hbwave: haemoglobin maps from RGB frames.

#include "hbwave/hbwave.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace hbwave;

namespace {

#ifndef HBWAVE_DATA_DIR
#define HBWAVE_DATA_DIR "data"
#endif

const std::string kDefaultSensitivity = std::string(HBWAVE_DATA_DIR) + "/camera_sensitivity.csv";
const std::string kDefaultBasis = std::string(HBWAVE_DATA_DIR) + "/haemoglobin_attenuation.csv";

struct Common {
    int threads = 1;
    std::string sensitivity = kDefaultSensitivity;
    std::string basis = kDefaultBasis;
};

struct EstimatorFlags {
    std::string mode = "hybrid";
    int levels = 1;
    double gamma = 1e-3;
    double beta = 0.1;
    int iters = 300;
    double tol = 1e-4;
    double epsilon = 1e-6;
    std::string start = "flat";
    double calibration = 1.0;

    void add(CLI::App* app) {
        app->add_option("--mode", mode, "hybrid | tikhonov | bayes")->capture_default_str();
        app->add_option("--levels", levels, "Haar levels (hybrid mode)")->capture_default_str();
        app->add_option("--gamma", gamma, "Tikhonov weight, relative to trace(C'C)/L")
            ->capture_default_str();
        app->add_option("--beta", beta, "shape prior weight")->capture_default_str();
        app->add_option("--iters", iters, "Bayes iteration cap")->capture_default_str();
        app->add_option("--tol", tol, "Bayes relative tolerance")->capture_default_str();
        app->add_option("--epsilon", epsilon, "reflectance floor before the log")
            ->capture_default_str();
        app->add_option("--start", start, "Bayes starting point: flat | tikhonov")
            ->capture_default_str();
        app->add_option("--calibration", calibration, "scale applied to hbo/hb")
            ->capture_default_str();
    }

    PipelineConfig config(Mode m, int n_levels, int threads) const {
        PipelineConfig c;
        c.mode = m;
        c.n_levels = n_levels;
        c.tikhonov_gamma = gamma;
        c.bayes.beta = beta;
        c.bayes.max_iters = iters;
        c.bayes.rel_tol = tol;
        c.bayes.epsilon = epsilon;
        if (start == "flat")
            c.bayes.start = bayes::Start::flat;
        else if (start == "tikhonov")
            c.bayes.start = bayes::Start::tikhonov;
        else
            throw ArgumentError("--start must be flat or tikhonov, got '" + start + "'");
        c.calibration_scale = calibration;
        c.threads = threads;
        return c;
    }
};

void print_options(const CLI::App& app, const std::string& prefix) {
    for (const CLI::Option* opt : app.get_options()) {
        if (opt->get_lnames().empty() || opt->get_configurable() == false) continue;
        const std::string name = opt->get_lnames().front();
        if (name == "help" || name == "config") continue;
        std::string value = opt->count() ? opt->as<std::string>() : opt->get_default_str();
        std::cout << prefix << name << " = " << value << "\n";
    }
}

// Options of the top level and of the selected subcommand chain.
void print_config(const CLI::App& app) {
    std::cout << "# effective config\n";
    print_options(app, "");
    std::string prefix;
    for (const CLI::App* sub = &app; !sub->get_subcommands().empty();) {
        sub = sub->get_subcommands().front();
        prefix += sub->get_name() + ".";
        print_options(*sub, prefix);
    }
    std::cout.flush();
}

std::vector<double> parse_list(const std::string& s, std::size_t n, const std::string& flag) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ArgumentError(flag + ": '" + item + "' is not a number");
        }
    }
    if (v.size() != n)
        throw ArgumentError(flag + " expects " + std::to_string(n) + " comma-separated values");
    return v;
}

// "{}" in an output path is replaced by the input stem; needed for several inputs.
fs::path output_for(const std::string& pattern, const fs::path& input, std::size_t count) {
    const auto pos = pattern.find("{}");
    if (pos == std::string::npos) {
        if (count > 1)
            throw ArgumentError("output path '" + pattern +
                                "' needs a {} placeholder when several inputs match");
        return pattern;
    }
    std::string out = pattern;
    out.replace(pos, 2, input.stem().string());
    return out;
}

fs::path prepared(const fs::path& out) {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    return out;
}

synth::PhantomSpec spec_from_json(const fs::path& p) {
    std::ifstream f(p);
    if (!f) throw FormatError("cannot open " + p.string());
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw FormatError(p.string() + ": " + e.what());
    }
    synth::PhantomSpec s;
    try {
        s.height = j.value("height", s.height);
        s.width = j.value("width", s.width);
        s.background_hbo = j.value("background_hbo", s.background_hbo);
        s.background_hb = j.value("background_hb", s.background_hb);
        s.illumination_offset = j.value("illumination_offset", s.illumination_offset);
        s.offset_gradient = j.value("offset_gradient", s.offset_gradient);
        s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
        s.seed = j.value("seed", s.seed);
        s.exposure = j.value("exposure", s.exposure);
        for (const auto& b : j.value("blobs", json::array()))
            s.blobs.push_back({b.at("row"), b.at("col"), b.at("radius"), b.value("hbo", 0.0),
                               b.value("hb", 0.0)});
    } catch (const json::exception& e) {
        throw FormatError(p.string() + ": " + e.what());
    }
    return s;
}

// ---------------------------------------------------------------------------

struct SynthPhantom {
    std::string spec_file;
    int height = 64, width = 64, blobs = 6;
    std::uint64_t seed = 0;
    double noise = 0.0;
    double exposure = 1.0;
    std::string out_cube, out_truth, out_rgb;

    void add(CLI::App* app) {
        app->add_option("--spec", spec_file, "phantom description (JSON); flags below are ignored");
        app->add_option("--height", height)->capture_default_str();
        app->add_option("--width", width)->capture_default_str();
        app->add_option("--blobs", blobs, "random Gaussian features")->capture_default_str();
        app->add_option("--seed", seed)->capture_default_str();
        app->add_option("--noise", noise, "reflectance noise sigma")->capture_default_str();
        app->add_option("--exposure", exposure)->capture_default_str();
        app->add_option("--out-cube", out_cube, "noisy reflectance cube (SPC1)");
        app->add_option("--out-truth", out_truth, "true concentration map (SPC1)");
        app->add_option("--out-rgb", out_rgb, "RGB frame (PPM)");
    }

    int run(const Common& c) const {
        synth::PhantomSpec spec;
        if (!spec_file.empty()) {
            spec = spec_from_json(spec_file);
        } else {
            if (blobs < 0) throw ArgumentError("--blobs must be >= 0");
            spec = synth::random_phantom(height, width, seed, noise, blobs);
            spec.exposure = exposure;
        }
        spec.validate();
        const WavelengthGrid grid = WavelengthGrid::visible();
        const auto cam = io::load_sensitivity(c.sensitivity, grid);
        const auto basis = io::load_basis(c.basis, grid);
        const auto ph = synth::make_phantom(spec, basis, cam, c.threads);
        if (!out_cube.empty()) io::write_cube(out_cube, ph.cube);
        if (!out_truth.empty()) io::write_map(out_truth, ph.truth);
        if (!out_rgb.empty()) io::write_ppm(out_rgb, ph.rgb);
        std::cout << "phantom " << spec.height << "x" << spec.width << " blobs "
                  << spec.blobs.size() << " noise " << spec.noise_sigma << " seed " << spec.seed
                  << "\n";
        return 0;
    }
};

struct SynthPulse {
    int height = 32, width = 32;
    std::uint64_t seed = 0;
    double fps = 25.0, duration = 10.0, hz = 1.25, amplitude = 0.05, noise = 0.005;
    std::string out_dir;

    void add(CLI::App* app) {
        app->add_option("--height", height)->capture_default_str();
        app->add_option("--width", width)->capture_default_str();
        app->add_option("--seed", seed)->capture_default_str();
        app->add_option("--fps", fps)->capture_default_str();
        app->add_option("--duration", duration, "seconds")->capture_default_str();
        app->add_option("--hz", hz, "pulse frequency")->capture_default_str();
        app->add_option("--amplitude", amplitude, "relative THb modulation")
            ->capture_default_str();
        app->add_option("--noise", noise, "reflectance noise sigma")->capture_default_str();
        app->add_option("--out-dir", out_dir)->required();
    }

    int run(const Common& c) const {
        const WavelengthGrid grid = WavelengthGrid::visible();
        synth::PhantomSpec spec = synth::random_phantom(height, width, seed, noise, 0);
        spec.offset_gradient = 0.0;
        const synth::PulseSequence seq(spec, io::load_basis(c.basis, grid),
                                       io::load_sensitivity(c.sensitivity, grid), fps, duration,
                                       hz, amplitude);
        fs::create_directories(out_dir);
        // One scale for the whole sequence, with headroom above the first frame.
        const double scale = 1.25 * io::auto_scale(seq.frame(0));
        std::vector<double> thb;
        for (std::size_t i = 0; i < seq.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "frame_%05zu.ppm", i);
            io::write_ppm(fs::path(out_dir) / name, seq.frame(i), scale);
            thb.push_back(seq.truth(i).thb(height / 2, width / 2));
        }
        io::write_trace(fs::path(out_dir) / "truth.csv", timeseries::Trace{fps, thb});
        std::cout << "frames " << seq.size() << " fps " << fps << " hz " << hz << "\n";
        return 0;
    }
};

struct Estimate {
    std::string in, out_map, out_cube;
    EstimatorFlags est;

    void add(CLI::App* app) {
        app->add_option("--in", in, "PPM file or glob")->required();
        est.add(app);
        app->add_option("--out-map", out_map, "concentration map (SPC1); {} = input stem")
            ->required();
        app->add_option("--out-cube", out_cube, "estimated reflectance cube (SPC1)");
    }

    int run(const Common& c) const {
        const auto inputs = io::expand_glob(in);
        const WavelengthGrid grid = WavelengthGrid::visible();
        const Pipeline p(io::load_sensitivity(c.sensitivity, grid), io::load_basis(c.basis, grid),
                         est.config(parse_mode(est.mode), est.levels, c.threads));
        std::optional<std::pair<int, int>> dims;
        for (const auto& path : inputs) {
            const RgbImage rgb = io::read_rgb(path);
            if (dims && (rgb.rows() != dims->first || rgb.cols() != dims->second))
                throw StreamError(path.string() + " is " + std::to_string(rgb.rows()) + "x" +
                                  std::to_string(rgb.cols()) + ", earlier frames are " +
                                  std::to_string(dims->first) + "x" +
                                  std::to_string(dims->second));
            dims = {rgb.rows(), rgb.cols()};
            const FrameResult r = p.estimate(rgb);
            io::write_map(prepared(output_for(out_map, path, inputs.size())), r.map);
            if (!out_cube.empty()) io::write_cube(prepared(output_for(out_cube, path, inputs.size())), r.cube);
            const auto& b = r.stats.bayes;
            std::cout << path.filename().string() << " pixels " << r.stats.pixels
                      << " bayes_coefficients " << b.coefficients << " mean_iterations "
                      << (b.coefficients ? double(b.total_iterations) / double(b.coefficients) : 0.0)
                      << " unconverged " << b.unconverged << " seconds " << r.stats.seconds
                      << "\n";
        }
        return 0;
    }
};

struct Reference {
    std::string in_cube, out_map;
    double epsilon = 1e-6;

    void add(CLI::App* app) {
        app->add_option("--in-cube", in_cube, "reflectance cube (SPC1)")->required();
        app->add_option("--epsilon", epsilon)->capture_default_str();
        app->add_option("--out-map", out_map)->required();
    }

    int run(const Common& c) const {
        const SpectralCube cube = io::read_cube(in_cube);
        const auto basis = io::load_basis(c.basis, cube.grid());
        const auto map = bayes::ConcentrationFitter(basis).fit_image(cube, epsilon, c.threads);
        io::write_map(out_map, map);
        std::cout << "reference " << map.rows() << "x" << map.cols() << " bands "
                  << cube.channels() << "\n";
        return 0;
    }
};

struct Compare {
    std::string est, ref, mask, report;

    void add(CLI::App* app) {
        app->add_option("--est", est)->required();
        app->add_option("--ref", ref)->required();
        app->add_option("--mask", mask, "PPM; nonzero pixels are scored");
        app->add_option("--report", report, "CSV output");
    }

    int run(const Common& c) const {
        const auto e = io::read_map(est), r = io::read_map(ref);
        std::optional<Image> m;
        if (!mask.empty()) m = io::read_mask(mask);
        const auto rep = metrics::concentration_mse(e, r, m, c.threads);
        if (!report.empty()) {
            std::ofstream f(report);
            f.precision(17);
            f << "pixels,mse,rmse,rmse_hbo,rmse_hb\n"
              << rep.pixels << "," << rep.mse << "," << rep.rmse() << "," << rep.rmse_hbo()
              << "," << rep.rmse_hb() << "\n";
            if (!f) throw FormatError("cannot write " + report);
        }
        std::cout << "pixels " << rep.pixels << " rmse " << rep.rmse() << " rmse_hbo "
                  << rep.rmse_hbo() << " rmse_hb " << rep.rmse_hb() << "\n";
        return 0;
    }
};

struct Pulse {
    std::string maps, rect = "0,0,1,1", band = "0.6,3.0", out;
    double fps = 25.0;
    double derivative = 0.0;

    void add(CLI::App* app) {
        app->add_option("--maps", maps, "glob of SPC1 maps, in frame order")->required();
        app->add_option("--rect", rect, "x,y,w,h (fixed region)")->capture_default_str();
        app->add_option("--fps", fps)->capture_default_str();
        app->add_option("--band", band, "lo,hi in Hz")->capture_default_str();
        app->add_option("--derivative", derivative,
                        "analyse the smoothed derivative with this window in seconds (0 = off)")
            ->capture_default_str();
        app->add_option("--out", out, "trace CSV");
    }

    int run(const Common&) const {
        const auto r = parse_list(rect, 4, "--rect");
        const auto b = parse_list(band, 2, "--band");
        for (double v : r)
            if (v != std::floor(v)) throw ArgumentError("--rect values must be integers");
        const timeseries::Rect box{int(r[0]), int(r[1]), int(r[2]), int(r[3])};
        timeseries::PatchMeanAccumulator acc(box, fps);
        for (const auto& p : io::expand_glob(maps)) acc.add(io::read_map(p));
        timeseries::Trace trace = acc.finish();
        if (!out.empty()) io::write_trace(out, trace);
        if (derivative > 0.0) trace = timeseries::smooth_derivative(trace, derivative);
        const auto peak = timeseries::dominant_frequency(trace, {b[0], b[1]});
        std::cout << "frames " << trace.size() << " missing " << acc.missing() << "\n"
                  << "peak_hz " << peak.hz << "\n"
                  << "power_fraction " << peak.power_fraction << "\n"
                  << "bpm " << peak.per_minute() << "\n";
        return 0;
    }
};

struct Bench {
    std::string in, modes = "hybrid:1,hybrid:3,tikhonov:1,bayes:1", report;
    int repeat = 5;
    EstimatorFlags est;

    void add(CLI::App* app) {
        app->add_option("--in", in, "PPM glob")->required();
        app->add_option("--modes", modes, "mode:levels list")->capture_default_str();
        app->add_option("--repeat", repeat)->capture_default_str();
        app->add_option("--report", report, "CSV output");
        est.add(app);
    }

    int run(const Common& c) const {
        std::vector<RgbImage> frames;
        for (const auto& p : io::expand_glob(in)) frames.push_back(io::read_rgb(p));
        const WavelengthGrid grid = WavelengthGrid::visible();
        const auto cam = io::load_sensitivity(c.sensitivity, grid);
        const auto basis = io::load_basis(c.basis, grid);
        std::ofstream rep;
        if (!report.empty()) {
            rep.open(report);
            if (!rep) throw FormatError("cannot write " + report);
            rep << "mode,levels,frames,repeat,fps\n";
        }
        std::stringstream ss(modes);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto colon = item.find(':');
            const Mode m = parse_mode(item.substr(0, colon));
            int levels = 1;
            if (colon != std::string::npos) {
                try {
                    levels = std::stoi(item.substr(colon + 1));
                } catch (const std::exception&) {
                    throw ArgumentError("--modes: bad level count in '" + item + "'");
                }
            }
            const Pipeline p(cam, basis, est.config(m, levels, c.threads));
            const double rate = measure_throughput(p, frames, repeat);
            std::cout << mode_name(m) << ":" << levels << " fps " << rate << "\n";
            if (rep) rep << mode_name(m) << "," << levels << "," << frames.size() << "," << repeat
                         << "," << rate << "\n";
        }
        return 0;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hbwave: haemoglobin concentration maps from RGB frames"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML file with option values (flags take precedence)");
    Common common;
    app.add_option("--threads", common.threads, "worker threads; 1 is deterministic")
        ->capture_default_str();
    app.add_option("--sensitivity", common.sensitivity, "camera sensitivity CSV")
        ->capture_default_str();
    app.add_option("--basis", common.basis, "HbO/Hb attenuation CSV")->capture_default_str();

    auto* synth_cmd = app.add_subcommand("synth", "synthetic test data");
    synth_cmd->require_subcommand(1);
    SynthPhantom phantom;
    phantom.add(synth_cmd->add_subcommand("phantom", "phantom cube, truth and RGB frame"));
    SynthPulse pulse_gen;
    pulse_gen.add(synth_cmd->add_subcommand("pulse", "pulsatile RGB frame sequence"));
    Estimate estimate;
    estimate.add(app.add_subcommand("estimate", "concentration maps from RGB frames"));
    Reference reference;
    reference.add(app.add_subcommand("reference", "direct fit of a reflectance cube"));
    Compare compare;
    compare.add(app.add_subcommand("compare", "error between two concentration maps"));
    Pulse pulse;
    pulse.add(app.add_subcommand("pulse", "pulse rate from a map sequence"));
    Bench bench;
    bench.add(app.add_subcommand("bench", "frames per second per mode"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (common.threads < 1) throw ArgumentError("--threads must be >= 1");
        print_config(app);
        if (synth_cmd->parsed()) {
            if (synth_cmd->get_subcommand("phantom")->parsed()) return phantom.run(common);
            return pulse_gen.run(common);
        }
        if (app.get_subcommand("estimate")->parsed()) return estimate.run(common);
        if (app.get_subcommand("reference")->parsed()) return reference.run(common);
        if (app.get_subcommand("compare")->parsed()) return compare.run(common);
        if (app.get_subcommand("pulse")->parsed()) return pulse.run(common);
        if (app.get_subcommand("bench")->parsed()) return bench.run(common);
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        // format, range, structure, stream, grid and resolution errors
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
