// Command-line front end: stroke-patch set generation, model training,
// image stylization and checkpoint inspection.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "strokepatch/strokepatch.hpp"

namespace sp = strokepatch;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct GenArgs {
  std::string style;
  std::string spec_file;
  std::string out_dir;
  int count = -1;
  std::string size;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  std::string patches_dir;
  std::string out_path;
  std::string metrics_path;
  int epochs = 10;
  double lr = 0.001;
  int batch = 4;
  double blur_radius = 5.0;
  int depth = 4;
  int base_channels = 64;
  std::uint64_t seed = 0;
  long max_steps = 0;
};

struct StyleArgs {
  std::string model_path;
  std::string input_path;
  std::string output_path;
  double scale = 1.0;
};

void parse_size(const std::string& size, int& width, int& height) {
  const auto x = size.find('x');
  if (x == std::string::npos || x == 0 || x + 1 >= size.size())
    throw sp::ValueError("--size expects WxH, e.g. 64x64");
  try {
    width = std::stoi(size.substr(0, x));
    height = std::stoi(size.substr(x + 1));
  } catch (const std::exception&) {
    throw sp::ValueError("--size expects integer dimensions, e.g. 64x64");
  }
}

int run_gen_patches(const GenArgs& args) {
  sp::StrokeStyleSpec spec =
      !args.style.empty() ? sp::preset(args.style) : sp::load_style(args.spec_file);
  if (args.count >= 0) spec.count = args.count;
  if (!args.size.empty()) parse_size(args.size, spec.width, spec.height);
  sp::validate(spec);
  sp::generate_patch_dir(spec, args.seed, args.out_dir);
  std::cout << args.out_dir << ": " << spec.count << " patches (" << spec.width << "x"
            << spec.height << "), seed " << args.seed << "\n";
  return kExitOk;
}

int run_train(const TrainArgs& args) {
  sp::DirectoryPatchSource source{std::filesystem::path(args.patches_dir)};
  const sp::StrokeStyleSpec& spec = source.spec();

  sp::UNetConfig config;
  config.depth = args.depth;
  config.base_channels = args.base_channels;
  sp::ModelState<float> model = sp::build_unet<float>(config, args.seed);

  sp::TrainConfig cfg;
  cfg.epochs = args.epochs;
  cfg.learning_rate = args.lr;
  cfg.batch_size = args.batch;
  cfg.blur_radius = static_cast<float>(args.blur_radius);
  cfg.noise = spec.noise;
  cfg.noise_probability = spec.noise_probability;
  cfg.seed = args.seed;
  cfg.checkpoint_path = args.out_path;
  cfg.metrics_csv_path = args.metrics_path.empty() ? args.out_path + ".metrics.csv"
                                                   : args.metrics_path;
  cfg.style_name = spec.name;
  cfg.max_steps = args.max_steps;

  const sp::TrainResult result = sp::train(source, model, cfg);
  std::cout << "checkpoint: " << args.out_path << "\n";
  std::cout << "metrics: " << cfg.metrics_csv_path << "\n";
  std::printf("final loss: %.8g after %ld optimizer steps\n", result.final_loss, result.steps);
  return kExitOk;
}

int run_style(const StyleArgs& args) {
  const sp::Checkpoint ck = sp::load_checkpoint(args.model_path);
  const sp::ModelState<float> model = sp::model_from_checkpoint(ck);
  const sp::Image input = sp::read_png(args.input_path);
  const sp::Image output = sp::stylize(model, input, args.scale);
  sp::write_png(output, args.output_path);
  std::cout << args.output_path << "\n";
  return kExitOk;
}

int run_inspect(const std::string& model_path) {
  const sp::Checkpoint ck = sp::load_checkpoint(model_path);
  std::size_t params = 0;
  for (const auto& [name, t] : ck.tensors) params += t.numel();
  std::cout << "format version: " << ck.version << "\n";
  std::cout << "architecture: in=" << ck.config.in_channels << " out=" << ck.config.out_channels
            << " depth=" << ck.config.depth << " base=" << ck.config.base_channels
            << " norm_eps=" << ck.config.norm_epsilon << "\n";
  std::cout << "parameters: " << params << " across " << ck.tensors.size() << " tensors\n";
  std::cout << "style: " << (ck.meta.style.empty() ? "(unset)" : ck.meta.style) << "\n";
  std::cout << "seed: " << ck.meta.seed << "\n";
  std::cout << "epochs completed: " << ck.meta.epochs_completed << "\n";
  std::printf("final loss: %.8g\n", ck.meta.final_loss);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stroke-patch stylization pipeline"};
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-patches", "render a stroke patch set to a directory");
  gen_cmd->add_option("--style", gen.style, "preset name");
  gen_cmd->add_option("--spec", gen.spec_file, "style spec JSON file");
  gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();
  gen_cmd->add_option("--count", gen.count, "override patch count");
  gen_cmd->add_option("--size", gen.size, "override patch size as WxH");
  gen_cmd->add_option("--seed", gen.seed, "generation seed");

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model on a generated patch set");
  train_cmd->add_option("--patches", tr.patches_dir, "patch directory with manifest.json")
      ->required();
  train_cmd->add_option("--out", tr.out_path, "checkpoint output path")->required();
  train_cmd->add_option("--epochs", tr.epochs, "training epochs")->capture_default_str();
  train_cmd->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--batch", tr.batch, "batch size")->capture_default_str();
  train_cmd->add_option("--blur-radius", tr.blur_radius, "corruption blur radius")
      ->capture_default_str();
  train_cmd->add_option("--depth", tr.depth, "U-Net pooling stages")->capture_default_str();
  train_cmd->add_option("--base-channels", tr.base_channels, "channels at the first stage")
      ->capture_default_str();
  train_cmd->add_option("--seed", tr.seed, "training seed");
  train_cmd->add_option("--max-steps", tr.max_steps,
                        "stop after this many optimizer steps (0 = full run)");
  train_cmd->add_option("--metrics", tr.metrics_path,
                        "metrics CSV path (default: <out>.metrics.csv)");

  StyleArgs st;
  CLI::App* style_cmd = app.add_subcommand("style", "stylize a photograph with a trained model");
  style_cmd->add_option("--model", st.model_path, "checkpoint path")->required();
  style_cmd->add_option("--input", st.input_path, "input PNG")->required();
  style_cmd->add_option("--output", st.output_path, "output PNG")->required();
  style_cmd
      ->add_option("--scale", st.scale,
                   "reduce by this factor before stylizing, enlarge after (0 < r <= 1)")
      ->capture_default_str()
      ->check([](const std::string& v) -> std::string {
        try {
          const double r = std::stod(v);
          if (r > 0.0 && r <= 1.0) return {};
        } catch (const std::exception&) {
        }
        return "scale must lie in (0, 1]";
      });

  std::string inspect_path;
  CLI::App* inspect_cmd = app.add_subcommand("inspect", "print checkpoint configuration");
  inspect_cmd->add_option("model", inspect_path, "checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (app.got_subcommand(gen_cmd)) {
      if (gen.style.empty() == gen.spec_file.empty()) {
        std::cerr << "gen-patches: exactly one of --style or --spec is required\n";
        return kExitUsage;
      }
      return run_gen_patches(gen);
    }
    if (app.got_subcommand(train_cmd)) return run_train(tr);
    if (app.got_subcommand(style_cmd)) return run_style(st);
    if (app.got_subcommand(inspect_cmd)) return run_inspect(inspect_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
