// pixelstack command-line interface.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "harness/commands.hpp"
#include "pixelstack/error.hpp"

namespace h = pixelstack::harness;

int main(int argc, char** argv) {
  CLI::App app{"pixelstack: hierarchical autoregressive image models"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  h::TrainArgs train;
  auto* c_train = app.add_subcommand("train", "train a hierarchy from a config and an IDT1 dataset");
  c_train->add_option("--config", train.config, "run config")->required();
  c_train->add_option("--dataset", train.dataset, "IDT1 dataset")->required();
  c_train->add_option("--out", train.out, "output directory")->required();
  c_train->add_option("--seed", train.seed, "override [global] seed");
  c_train->add_option("--levels", train.levels, "number of encoder levels to train (0 = prior only)");

  h::SampleArgs samp;
  auto* c_sample = app.add_subcommand("sample", "draw images from a trained run");
  c_sample->add_option("--run", samp.run, "directory written by train")->required();
  c_sample->add_option("--out", samp.out, "output directory")->required();
  c_sample->add_option("--class", samp.label, "class label for a class-conditional prior");
  c_sample->add_option("--n", samp.n, "number of images")->check(CLI::PositiveNumber);
  c_sample->add_option("--temperature", samp.temperature, "sampling temperature")->check(CLI::PositiveNumber);
  c_sample->add_option("--seed", samp.seed, "sampling seed");

  h::ReconstructArgs rec;
  auto* c_rec = app.add_subcommand("reconstruct", "grid of originals and sampled reconstructions");
  c_rec->add_option("--run", rec.run, "directory written by train")->required();
  c_rec->add_option("--dataset", rec.dataset, "IDT1 dataset")->required();
  c_rec->add_option("--out", rec.out, "output directory")->required();
  c_rec->add_option("--samples", rec.samples, "reconstructions per image");
  c_rec->add_option("--n", rec.n, "number of images");
  c_rec->add_option("--levels", rec.levels, "levels to encode before decoding (default: all)");
  c_rec->add_option("--temperature", rec.temperature, "sampling temperature (default 0.99)")->check(CLI::PositiveNumber);
  c_rec->add_option("--seed", rec.seed, "sampling seed");

  h::EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "per-image joint NLL as CSV");
  c_eval->add_option("--run", ev.run, "directory written by train")->required();
  c_eval->add_option("--dataset", ev.dataset, "IDT1 dataset")->required();
  c_eval->add_option("--out", ev.out, "output directory")->required();

  h::SweepArgs sw;
  auto* c_sweep = app.add_subcommand("sweep", "code predictability sweep; exit 1 if the trend fails");
  c_sweep->add_option("--config", sw.config, "run config");
  c_sweep->add_option("--dataset", sw.dataset, "IDT1 dataset");
  c_sweep->add_option("--out", sw.out, "output directory");
  c_sweep->add_option("--axis", sw.axis, "aux_depth or mask_side");
  c_sweep->add_option("--values", sw.values, "sweep values, e.g. 0 2 4")->delimiter(',');
  c_sweep->add_option("--seed", sw.seed, "override [global] seed");
  c_sweep->add_option("--check", sw.check, "only check the trend of an existing sweep CSV");

  h::PathologyArgs pa;
  auto* c_path = app.add_subcommand("pathology", "colour drift of end-to-end vs aux-decoder models");
  c_path->add_option("--config", pa.config, "run config")->required();
  c_path->add_option("--dataset", pa.dataset, "IDT1 dataset")->required();
  c_path->add_option("--out", pa.out, "output directory")->required();
  c_path->add_option("--n", pa.images, "images to reconstruct");
  c_path->add_option("--seed", pa.seed, "override [global] seed");

  h::GradcheckArgs gc;
  auto* c_grad = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  c_grad->add_option("--seed", gc.seed, "seed for the random inputs");

  h::SynthArgs sy;
  auto* c_synth = app.add_subcommand("synth", "write a synthetic texture dataset");
  c_synth->add_option("--out", sy.out, "IDT1 output file")->required();
  c_synth->add_option("--n", sy.n, "number of images");
  c_synth->add_option("--height", sy.height, "image height");
  c_synth->add_option("--width", sy.width, "image width");
  c_synth->add_option("--classes", sy.classes, "number of classes")->check(CLI::PositiveNumber);
  c_synth->add_option("--seed", sy.seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? h::kExitOk : h::kExitUsage;
  }

  try {
    if (*c_train) return h::cmd_train(train, std::cout);
    if (*c_sample) return h::cmd_sample(samp, std::cout);
    if (*c_rec) return h::cmd_reconstruct(rec, std::cout);
    if (*c_eval) return h::cmd_eval(ev, std::cout);
    if (*c_sweep) {
      if (sw.check.empty() && (sw.config.empty() || sw.dataset.empty() || sw.out.empty() || sw.axis.empty())) {
        std::cerr << "sweep: --config, --dataset, --out, --axis and --values are required without --check\n";
        return h::kExitUsage;
      }
      return h::cmd_sweep(sw, std::cout);
    }
    if (*c_path) return h::cmd_pathology(pa, std::cout);
    if (*c_grad) return h::cmd_gradcheck(gc, std::cout);
    if (*c_synth) return h::cmd_synth(sy, std::cout);
  } catch (const pixelstack::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return h::kExitUsage;
  } catch (const pixelstack::ValueError& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return h::kExitUsage;
  } catch (const pixelstack::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return h::kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return h::kExitFailure;
  }
  return h::kExitUsage;
}
