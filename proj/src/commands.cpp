#include "footreg/commands.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "footreg/image_io.hpp"
#include "footreg/serialize.hpp"

namespace footreg {

namespace fs = std::filesystem;

std::string checkpoint_stem(const std::string& path) {
  const std::string ext = ".freg";
  if (path.size() > ext.size() && path.compare(path.size() - ext.size(), ext.size(), ext) == 0) {
    return path.substr(0, path.size() - ext.size());
  }
  return path;
}

namespace {

Tensor batch_of(const Tensor& planar) {
  Shape s = planar.shape();
  s.insert(s.begin(), 1);
  return reshape(planar, s);
}

Tensor regularize_one(NetworkBundle& bundle, const Tensor& x, const Tensor& z) {
  NoGradGuard no_grad;
  Tensor p = generator_forward(batch_of(x), batch_of(z), bundle, Mode::eval);
  return reshape(p, x.shape());
}

std::string net_echo(const std::string& stem, const NetworkBundle& bundle) {
  return "checkpoint = " + stem + '\n' + net_config_to_text(bundle.config);
}

}  // namespace

DatasetManifest cmd_gen_data(const RunConfig& config, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  DatasetManifest m = build_dataset(config.dataset_count, config.gen, config.dataset_seed, out_dir);
  write_text_file(out_dir / "resolved.cfg", run_config_to_text(config));
  return m;
}

TrainingResult cmd_train(const RunConfig& config, const fs::path& dataset_dir, const fs::path& out_dir,
                         const std::string& resume_from, long stop_at) {
  if (!fs::exists(dataset_dir / kManifestName)) {
    throw ConfigError("no dataset manifest in " + dataset_dir.string());
  }
  const DatasetManifest manifest = read_manifest(dataset_dir);
  if (manifest.spec.image_size != config.train.net.image_size) {
    throw ConfigError("dataset rasters are " + std::to_string(manifest.spec.image_size) +
                      " px but image_size = " + std::to_string(config.train.net.image_size));
  }
  auto train_set = load_split(dataset_dir, manifest, Split::train);
  const std::string resume = resume_from.empty() ? std::string{} : checkpoint_stem(resume_from);
  RunConfig resolved = config;
  resolved.data_dir = dataset_dir.string();
  resolved.out_dir = out_dir.string();
  struct WriteResolved {
    const RunConfig& c;
    fs::path path;
    ~WriteResolved() {
      try {
        write_text_file(path, run_config_to_text(c));
      } catch (...) {
      }
    }
  } guard{resolved, out_dir / "resolved.cfg"};
  return run_training(config.train, std::move(train_set), out_dir, resume, stop_at);
}

void cmd_regularize(const std::string& checkpoint, const fs::path& mask_png, const fs::path& image_png,
                    const fs::path& out_png) {
  const std::string stem = checkpoint_stem(checkpoint);
  NetworkBundle bundle = load_bundle(stem);
  const Image8 mask = read_png(mask_png, 1);
  const Image8 image = read_png(image_png, 3);
  if (mask.width != image.width || mask.height != image.height) {
    throw ConfigError("mask is " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                      " but image is " + std::to_string(image.width) + "x" +
                      std::to_string(image.height));
  }
  const int unit = 1 << bundle.config.depth;
  if (mask.width % unit != 0 || mask.height % unit != 0) {
    throw ConfigError("raster sides must be divisible by " + std::to_string(unit));
  }
  const Tensor p = regularize_one(bundle, from_image8(mask), from_image8(image));
  if (out_png.has_parent_path()) fs::create_directories(out_png.parent_path());
  write_png(out_png, to_image8(p));
  write_text_file(fs::path(out_png).concat(".cfg"),
                  net_echo(stem, bundle) + "mask = " + mask_png.string() + "\nimage = " +
                      image_png.string() + '\n');
}

EvaluationReport cmd_evaluate(const std::string& checkpoint, const fs::path& dataset_dir, Split split,
                              const fs::path& out_dir) {
  const std::string stem = checkpoint_stem(checkpoint);
  NetworkBundle bundle = load_bundle(stem);
  const DatasetManifest manifest = read_manifest(dataset_dir);
  const auto triples = load_split(dataset_dir, manifest, split);
  if (triples.empty()) throw ConfigError("split '" + split_name(split) + "' is empty");
  EvaluationReport report = evaluate_dataset(bundle, triples);
  const std::vector<EvaluationRow> rows{report.baseline, report.regularized};
  fs::create_directories(out_dir);
  write_text_file(out_dir / "scores.csv", format_table_csv(rows));
  write_text_file(out_dir / "scores.txt", format_table_text(rows));
  write_text_file(out_dir / "resolved.cfg", net_echo(stem, bundle) + "data_dir = " +
                                                dataset_dir.string() + "\nsplit = " +
                                                split_name(split) + '\n');
  return report;
}

void cmd_render(const std::string& checkpoint, const fs::path& dataset_dir, std::size_t index,
                const fs::path& out_png) {
  const std::string stem = checkpoint_stem(checkpoint);
  NetworkBundle bundle = load_bundle(stem);
  const DatasetManifest manifest = read_manifest(dataset_dir);
  if (index >= manifest.records.size()) {
    throw ConfigError("sample index " + std::to_string(index) + " out of range (dataset has " +
                      std::to_string(manifest.records.size()) + ")");
  }
  const SampleTriple t = load_triple(dataset_dir, manifest.records[index]);
  const Tensor g = regularize_one(bundle, t.input_mask, t.image);

  const Image8 panels[4] = {to_image8(t.image), to_image8(t.input_mask), to_image8(g),
                            to_image8(t.ideal_mask)};
  const int w = panels[0].width, h = panels[0].height;
  Image8 out{4 * w, h, 3, std::vector<std::uint8_t>(std::size_t(4) * w * h * 3)};
  for (int k = 0; k < 4; ++k) {
    const Image8& p = panels[k];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          const int src_c = p.channels == 1 ? 0 : c;
          out.pixels[(std::size_t(y) * out.width + k * w + x) * 3 + c] =
              p.pixels[(std::size_t(y) * w + x) * p.channels + src_c];
        }
      }
    }
  }
  if (out_png.has_parent_path()) fs::create_directories(out_png.parent_path());
  write_png(out_png, out);
  write_text_file(fs::path(out_png).concat(".cfg"), net_echo(stem, bundle) + "data_dir = " +
                                                        dataset_dir.string() + "\nindex = " +
                                                        std::to_string(index) + '\n');
}

// ---- command line ----------------------------------------------------------------------------

namespace {

RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::string text = path.empty() ? std::string{} : read_text_file(path);
  text += '\n';
  for (const auto& o : overrides) text += o + '\n';
  return parse_run_config(text);
}

fs::path pick(const std::string& flag, const std::string& from_config, const char* what) {
  if (!flag.empty()) return flag;
  if (!from_config.empty()) return from_config;
  throw ConfigError(std::string("no ") + what + " given");
}

}  // namespace

int run_cli(int argc, char** argv) {
  set_blas_threads(1);
  CLI::App app{"Adversarial regularization of building footprint masks"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, resume, checkpoint, mask, image, out_png;
  std::string split = "test";
  std::vector<std::string> overrides;
  long stop_at = -1;
  std::size_t index = 0;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", overrides, "extra 'key=value' lines applied after the file");
  };

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic (x, z, y) corpus");
  add_config(gen);
  gen->add_option("-o,--out", out_dir, "dataset directory");

  auto* train = app.add_subcommand("train", "train E_G, E_R, F and D");
  add_config(train);
  train->add_option("-d,--data", data_dir, "dataset directory");
  train->add_option("-o,--out", out_dir, "output directory");
  train->add_option("--resume", resume, "checkpoint stem to continue from");
  train->add_option("--stop-at", stop_at, "stop once this batch index is reached");

  auto* reg = app.add_subcommand("regularize", "regularize one mask");
  reg->add_option("--checkpoint", checkpoint)->required();
  reg->add_option("--mask", mask)->required()->check(CLI::ExistingFile);
  reg->add_option("--image", image)->required()->check(CLI::ExistingFile);
  reg->add_option("-o,--out", out_png)->required();

  auto* eval = app.add_subcommand("evaluate", "score input and regularized masks on a split");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("-d,--data", data_dir)->required();
  eval->add_option("--split", split)->check(CLI::IsMember({"train", "val", "validation", "test"}));
  eval->add_option("-o,--out", out_dir)->required();

  auto* render = app.add_subcommand("render", "side-by-side panels z | x | G(x,z) | y");
  render->add_option("--checkpoint", checkpoint)->required();
  render->add_option("-d,--data", data_dir)->required();
  render->add_option("--index", index)->required();
  render->add_option("-o,--out", out_png)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      const RunConfig c = resolve_config(config_path, overrides);
      const fs::path dir = pick(out_dir, c.data_dir, "output directory");
      const auto m = cmd_gen_data(c, dir);
      std::cout << "wrote " << m.records.size() << " triples to " << dir.string() << '\n';
    } else if (*train) {
      const RunConfig c = resolve_config(config_path, overrides);
      const fs::path data = pick(data_dir, c.data_dir, "dataset directory");
      const fs::path out = pick(out_dir, c.out_dir, "output directory");
      const auto r = cmd_train(c, data, out, resume, stop_at);
      std::cout << "trained " << r.batches_run << " batches; checkpoint "
                << r.final_checkpoint.string() << " at batch " << r.final_batch_index << '\n';
    } else if (*reg) {
      cmd_regularize(checkpoint, mask, image, out_png);
    } else if (*eval) {
      const auto report = cmd_evaluate(checkpoint, data_dir, parse_split(split), out_dir);
      std::cout << format_table_text({report.baseline, report.regularized});
    } else if (*render) {
      cmd_render(checkpoint, data_dir, index, out_png);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}

}  // namespace footreg
