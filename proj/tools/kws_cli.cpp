// Command-line front door for the library: feature extraction, inference,
// pruning, quantization, timing sweeps, streaming, and weight generation.
//
// Exit codes: 0 ok, 2 I/O error, 3 shape/format error, 4 bad flags.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kws/kws.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 2;
constexpr int kExitShape = 3;
constexpr int kExitFlags = 4;

kws::NumericMode parse_numeric(const std::string& s) {
  if (s == "f32") return kws::NumericMode::f32;
  if (s == "i16") return kws::NumericMode::i16;
  if (s == "i16simd") return kws::NumericMode::i16_simd;
  throw kws::config_error("unknown numeric mode: " + s);
}

kws::Granularity parse_granularity(const std::string& s) {
  if (s == "fine") return kws::Granularity::fine_grained;
  if (s == "vector") return kws::Granularity::vector_level;
  if (s == "kernel") return kws::Granularity::kernel_level;
  if (s == "filter") return kws::Granularity::filter_level;
  throw kws::config_error("unknown granularity: " + s);
}

struct StrategyFlags {
  std::string strategy = "normal";
  std::string numeric = "f32";
  std::string mask_path;
  std::string keep_path;
};

kws::ExecStrategy build_strategy(const StrategyFlags& f) {
  kws::ExecStrategy s;
  s.numeric = parse_numeric(f.numeric);
  if (f.strategy == "normal") {
    // defaults
  } else if (f.strategy == "skip") {
    s.zero_handling = kws::ZeroHandling::skip_if;
  } else if (f.strategy == "vector") {
    s.zero_handling = kws::ZeroHandling::vector_mask;
    if (f.mask_path.empty()) {
      throw kws::config_error("--strategy vector needs --mask");
    }
    s.mask = kws::load_vector_mask(f.mask_path);
  } else if (f.strategy == "channels") {
    s.zero_handling = kws::ZeroHandling::channel_reduced;
    if (f.keep_path.empty()) {
      throw kws::config_error("--strategy channels needs --keep");
    }
    s.keep = kws::load_keep_list(f.keep_path);
  } else if (f.strategy == "wp") {
    s.loop_order = kws::LoopOrder::weight_prioritized;
  } else if (f.strategy == "wp-skip") {
    s.loop_order = kws::LoopOrder::weight_prioritized;
    s.zero_handling = kws::ZeroHandling::skip_if;
  } else {
    throw kws::config_error("unknown strategy: " + f.strategy);
  }
  s.validate();
  return s;
}

void add_strategy_flags(CLI::App* cmd, StrategyFlags& f) {
  cmd->add_option("--strategy", f.strategy,
                  "normal|skip|vector|channels|wp|wp-skip")
      ->default_val("normal");
  cmd->add_option("--numeric", f.numeric, "f32|i16|i16simd")
      ->default_val("f32");
  cmd->add_option("--mask", f.mask_path, "vector mask file (KWSM)");
  cmd->add_option("--keep", f.keep_path, "keep-list CSV of channel indices");
}

kws::Spectrogram load_input_spectrogram(const std::string& path,
                                        const kws::ModelConfig& cfg) {
  const std::string ext = std::filesystem::path(path).extension().string();
  if (ext == ".wav") {
    return kws::spectrogram_from_samples(kws::load_wav(path),
                                         kws::default_filterbank());
  }
  if (ext == ".f32" || ext == ".bin") {
    return kws::read_spectrogram_f32(path, cfg.input_cols, cfg.input_rows);
  }
  throw kws::config_error("cannot tell spectrogram from audio: " + path +
                          " (expected .wav, .f32 or .bin)");
}

void print_prune_report(const kws::PruneReport& r) {
  std::cout << "granularity=" << kws::to_string(r.granularity)
            << " requested=" << r.requested_fraction
            << " achieved=" << r.achieved_fraction
            << " units_removed=" << r.units_removed
            << " zero_weights=" << r.zero_weights << "/" << r.total_weights
            << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{
      "kws - keyword-spotting lab: mel frontend, instrumented CNN kernels, "
      "pruning/quantization sweeps and a calibrated timing model"};
  app.require_subcommand(1);
  app.set_config("--config", "", "optional key=value config file");

  const kws::ModelConfig cfg;

  // ---- features ----
  auto* features = app.add_subcommand(
      "features", "WAV -> log-mel spectrogram dump (CSV + raw float32)");
  std::string features_wav, features_out;
  features->add_option("wav", features_wav, "input WAV (PCM16, 16 kHz)")
      ->required();
  features->add_option("--out", features_out, "output base path")->required();

  // ---- infer ----
  auto* infer_cmd =
      app.add_subcommand("infer", "single inference on a WAV or spectrogram");
  std::string infer_input, infer_weights;
  StrategyFlags infer_flags;
  infer_cmd->add_option("input", infer_input, "WAV or .f32 spectrogram")
      ->required();
  infer_cmd->add_option("--weights", infer_weights, "KWSW weight file")
      ->required();
  add_strategy_flags(infer_cmd, infer_flags);

  // ---- prune ----
  auto* prune = app.add_subcommand("prune", "magnitude-prune a weight file");
  std::string prune_in, prune_out, prune_gran = "fine", prune_mask_out,
                                   prune_keep_out;
  double prune_fraction = 0.0;
  prune->add_option("--weights", prune_in, "float32 KWSW file")->required();
  prune->add_option("--fraction", prune_fraction, "fraction in [0,1]")
      ->required();
  prune->add_option("--granularity", prune_gran, "fine|vector|kernel|filter")
      ->default_val("fine");
  prune->add_option("--out", prune_out, "pruned weight file");
  prune->add_option("--mask-out", prune_mask_out, "mask file (KWSM)");
  prune->add_option("--keep-out", prune_keep_out, "keep-list CSV");

  // ---- quantize ----
  auto* quantize =
      app.add_subcommand("quantize", "float32 -> int16 weight file");
  std::string quant_in, quant_out;
  uint32_t quant_seed = kws::kDefaultCalibrationSeed;
  quantize->add_option("--weights", quant_in, "float32 KWSW file")->required();
  quantize->add_option("--out", quant_out, "int16 KWSW file")->required();
  quantize->add_option("--seed", quant_seed,
                       "activation calibration seed");

  // ---- sweep ----
  auto* sweep = app.add_subcommand(
      "sweep", "pruning sweeps with estimated times, as CSV");
  std::string sweep_weights, sweep_out;
  int sweep_figure = 5;
  bool sweep_gnuplot = false;
  uint32_t sweep_seed = 42;
  sweep->add_option("--figure", sweep_figure,
                    "preset suite: 3 (granularities), 5 (loop orders), "
                    "7 (int16/SIMD)")
      ->check(CLI::IsMember({3, 5, 7}));
  sweep->add_option("--weights", sweep_weights,
                    "float32 KWSW file (default: generated from --seed)");
  sweep->add_option("--seed", sweep_seed, "weight seed when generating");
  std::vector<double> sweep_fractions;
  sweep->add_option("--fraction", sweep_fractions,
                    "pruned fractions to sweep (default 0,0.1,...,0.9,0.95)");
  sweep->add_option("--out", sweep_out, "output CSV path")->required();
  sweep->add_flag("--gnuplot", sweep_gnuplot,
                  "also write <out>.gnuplot plotting script");

  // ---- stream ----
  auto* stream =
      app.add_subcommand("stream", "streaming inference over a WAV");
  std::string stream_wav, stream_weights, stream_out;
  StrategyFlags stream_flags;
  stream->add_option("wav", stream_wav, "input WAV (>= 1 s)")->required();
  stream->add_option("--weights", stream_weights, "KWSW weight file")
      ->required();
  stream->add_option("--out", stream_out, "event CSV path (default stdout)");
  add_strategy_flags(stream, stream_flags);

  // ---- gen-weights ----
  auto* gen = app.add_subcommand(
      "gen-weights", "deterministic pseudo-random float32 weight file");
  std::string gen_out;
  uint32_t gen_seed = 1;
  gen->add_option("--seed", gen_seed, "RNG seed");
  gen->add_option("--out", gen_out, "output KWSW file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitFlags;
  }

  try {
    if (*features) {
      const auto spec = kws::spectrogram_from_samples(
          kws::load_wav(features_wav), kws::default_filterbank());
      std::ofstream csv(features_out + ".csv");
      if (!csv) throw kws::io_error("cannot write " + features_out + ".csv");
      kws::write_spectrogram_csv(spec, csv);
      std::ofstream bin(features_out + ".f32", std::ios::binary);
      if (!bin) throw kws::io_error("cannot write " + features_out + ".f32");
      kws::write_spectrogram_f32(spec, bin);
      std::cout << "wrote " << features_out << ".csv and " << features_out
                << ".f32\n";
    } else if (*infer_cmd) {
      const kws::WeightSet w = kws::load_weights(infer_weights, cfg);
      const kws::ExecStrategy strategy = build_strategy(infer_flags);
      // both WAV-derived and dumped .f32 spectrograms are raw log-mel
      const kws::Spectrogram spec =
          kws::normalize(load_input_spectrogram(infer_input, cfg));
      const kws::InferResult res = kws::infer(spec, w, strategy);
      std::cout << "label " << cfg.labels[size_t(res.logits.label_index)]
                << " (index " << res.logits.label_index << ")\n";
      std::cout.precision(6);
      for (size_t i = 0; i < res.logits.probabilities.size(); ++i) {
        std::cout << cfg.labels[i] << " " << res.logits.probabilities[i]
                  << "\n";
      }
      kws::write_counters_csv_header(std::cout);
      kws::write_counters_csv_row(std::cout, strategy.name(), strategy.numeric,
                                  kws::sparsity_report(w).achieved_fraction,
                                  res.counters);
    } else if (*prune) {
      const kws::WeightSet w = kws::load_weights(prune_in, cfg);
      const kws::Granularity g = parse_granularity(prune_gran);
      switch (g) {
        case kws::Granularity::fine_grained: {
          auto res = kws::prune_fine(w, prune_fraction);
          if (!prune_out.empty()) kws::save_weights(res.weights, prune_out);
          if (!prune_mask_out.empty()) {
            kws::save_fine_mask(res.keep_mask, cfg.conv_shape(),
                                prune_mask_out);
          }
          print_prune_report(res.report);
          break;
        }
        case kws::Granularity::vector_level: {
          auto res = kws::prune_vector(w, prune_fraction);
          if (!prune_out.empty()) kws::save_weights(res.weights, prune_out);
          if (!prune_mask_out.empty()) {
            kws::save_vector_mask(res.mask, prune_mask_out);
          }
          print_prune_report(res.report);
          break;
        }
        case kws::Granularity::kernel_level:
        case kws::Granularity::filter_level: {
          auto res = kws::prune_channels(w, prune_fraction);
          if (!prune_keep_out.empty()) {
            kws::save_keep_list(res.keep, prune_keep_out);
          }
          if (!prune_out.empty()) kws::save_weights(w, prune_out);
          print_prune_report(res.report);
          break;
        }
      }
    } else if (*quantize) {
      const kws::WeightSet w = kws::load_weights(quant_in, cfg);
      kws::QuantizeOptions opt;
      opt.calibration_seed = quant_seed;
      const kws::WeightSet q = kws::quantize_weightset(w, opt);
      kws::save_weights(q, quant_out);
      std::cout << "wrote " << quant_out << " ("
                << std::filesystem::file_size(quant_out) << " bytes)\n";
    } else if (*sweep) {
      const kws::WeightSet w = sweep_weights.empty()
                                   ? kws::gen_weights(sweep_seed, cfg)
                                   : kws::load_weights(sweep_weights, cfg);
      std::mt19937 rng(7);
      const kws::Spectrogram fixture = kws::synthetic_spectrogram(rng, cfg);
      const auto& fractions = sweep_fractions.empty()
                                  ? kws::default_sweep_fractions()
                                  : sweep_fractions;
      const auto rows =
          kws::run_sweep(w, fixture, kws::figure_cells(sweep_figure),
                         fractions, kws::calibrate_default());
      std::ofstream out(sweep_out);
      if (!out) throw kws::io_error("cannot write " + sweep_out);
      kws::write_sweep_csv(rows, out);
      if (sweep_gnuplot) {
        std::ofstream gp(sweep_out + ".gnuplot");
        if (!gp) throw kws::io_error("cannot write " + sweep_out + ".gnuplot");
        kws::write_gnuplot_script(sweep_out, gp);
      }
      std::cout << "wrote " << sweep_out << " (" << rows.size() << " rows)\n";
    } else if (*stream) {
      const kws::WeightSet w = kws::load_weights(stream_weights, cfg);
      const kws::ExecStrategy strategy = build_strategy(stream_flags);
      const auto events = kws::run_stream(kws::load_wav(stream_wav), w,
                                          strategy, kws::calibrate_default());
      if (stream_out.empty()) {
        kws::write_events_csv(events, cfg, std::cout);
      } else {
        std::ofstream out(stream_out);
        if (!out) throw kws::io_error("cannot write " + stream_out);
        kws::write_events_csv(events, cfg, out);
      }
    } else if (*gen) {
      kws::save_weights(kws::gen_weights(gen_seed, cfg), gen_out);
      std::cout << "wrote " << gen_out << "\n";
    }
  } catch (const kws::io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const kws::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFlags;
  } catch (const kws::error& e) {
    // format_error, shape_error, wav_error
    std::cerr << "error: " << e.what() << "\n";
    return kExitShape;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
