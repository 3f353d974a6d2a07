#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "kws/errors.hpp"
#include "kws/kernels.hpp"
#include "kws/model.hpp"
#include "kws/quantize_model.hpp"
#include "kws/sparsity.hpp"
#include "kws/weights_io.hpp"

namespace kws {

// Linear counter -> cycles model for a 216 MHz in-order core:
//
//   cycles = float_mac * fmacs + int_mac * unpacked_imacs + simd_op * simd
//          + weight_load * loads + act_access * (reads + writes)
//          + branch_eval * branches + fixed_overhead
//
// estimate_ms = cycles / clock * 1000. The default weights are calibrated
// against three measured dense-inference times of the reference firmware
// (30.8 ms float32, 21.4 ms int16, 15.6 ms int16+SMLAD) and chosen so the
// sweep trends match its measured behaviour: a zero-skip branch costs far
// more than the MAC it saves, structured row skipping pays off by 20%
// pruning, and weight-prioritized zero skipping only crosses below the
// dense baseline at roughly 72% sparsity. The frontend is anchored
// separately at 6.0 ms per mel column; its internals are not counter-
// instrumented.

struct CostParams {
  double float_mac = 5.06;
  double int_mac = 0.8;
  double simd_op = 5.146;
  double weight_load = 0.5;
  double act_access = 8.3;
  double branch_eval = 48.74;
  double fixed_overhead_cycles = 30000.0;
  double clock_hz = 216e6;
  double frontend_cycles_per_column = 1296000.0;
};

/// The committed default calibration (see the derivation above).
inline CostParams calibrate_default() { return CostParams{}; }

inline double estimate_cycles(const ExecCounters& c, NumericMode mode,
                              const CostParams& p) {
  double cycles = p.fixed_overhead_cycles;
  if (mode == NumericMode::f32) {
    cycles += p.float_mac * double(c.macs);
  } else {
    // a packed op covers two logical MACs; only the rest run scalar
    const double unpacked = double(c.macs) - 2.0 * double(c.simd_ops);
    cycles += p.int_mac * unpacked + p.simd_op * double(c.simd_ops);
  }
  cycles += p.weight_load * double(c.weight_loads);
  cycles += p.act_access * (double(c.act_reads) + double(c.act_writes));
  cycles += p.branch_eval * double(c.branch_evals);
  return cycles;
}

inline double estimate_ms(const ExecCounters& c, NumericMode mode,
                          const CostParams& p) {
  return estimate_cycles(c, mode, p) / p.clock_hz * 1000.0;
}

inline double frontend_estimate_ms(const CostParams& p, int columns = 1) {
  return p.frontend_cycles_per_column * double(columns) / p.clock_hz * 1000.0;
}

// ---------------------------------------------------------------------------
// Calibration residuals against the anchor times

struct AnchorResidual {
  std::string name;
  double target_ms = 0.0;
  double estimate_ms = 0.0;
  double rel_error = 0.0;
};

inline ExecCounters dense_counters(const ModelConfig& cfg, NumericMode mode) {
  const MacCounts m = mac_count(cfg);
  const ConvShape s = cfg.conv_shape();
  ExecCounters c;
  c.macs = uint64_t(m.total);
  if (mode == NumericMode::i16_simd) {
    c.simd_ops = uint64_t(m.total) / 2;
    c.weight_loads = uint64_t(m.total) / 2;
    c.act_reads = uint64_t(m.total) / 2;
  } else {
    c.weight_loads = uint64_t(m.total);
    c.act_reads = uint64_t(m.total);
  }
  c.act_writes = uint64_t(s.output_count());
  for (int l = 0; l < cfg.num_fc_layers(); ++l) {
    c.act_writes += uint64_t(cfg.fc_out_dim(l));
  }
  return c;
}

inline std::vector<AnchorResidual> anchor_residuals(
    const CostParams& p, const ModelConfig& cfg = ModelConfig{}) {
  std::vector<AnchorResidual> out;
  const struct {
    const char* name;
    NumericMode mode;
    double target;
  } anchors[] = {
      {"dense_f32", NumericMode::f32, 30.8},
      {"dense_i16", NumericMode::i16, 21.4},
      {"dense_i16_simd", NumericMode::i16_simd, 15.6},
  };
  for (const auto& a : anchors) {
    const double est = estimate_ms(dense_counters(cfg, a.mode), a.mode, p);
    out.push_back({a.name, a.target, est, std::fabs(est - a.target) / a.target});
  }
  const double fe = frontend_estimate_ms(p);
  out.push_back({"frontend_column", 6.0, fe, std::fabs(fe - 6.0) / 6.0});
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepRow {
  std::string strategy;
  std::string numeric;
  std::string granularity;
  double fraction = 0.0;
  ExecCounters counters;
  double est_ms = 0.0;
};

struct SweepCell {
  ExecStrategy strategy;       // mask/keep filled in per fraction
  Granularity granularity = Granularity::fine_grained;
};

inline std::vector<double> default_sweep_fractions() {
  return {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95};
}

/// Prunes at each fraction, runs one instrumented inference per cell and
/// estimates its time. int16 cells quantize the pruned weights with the
/// dense model's activation exponents (one deployed scale set per sweep).
inline std::vector<SweepRow> run_sweep(const WeightSet& dense,
                                       const Spectrogram& fixture,
                                       const std::vector<SweepCell>& cells,
                                       const std::vector<double>& fractions,
                                       const CostParams& params) {
  check_shapes(dense);
  if (dense.dtype != WeightDtype::f32) {
    throw shape_error("sweeps start from float32 weights");
  }

  bool needs_i16 = false;
  for (const auto& cell : cells) {
    needs_i16 |= cell.strategy.numeric != NumericMode::f32;
  }
  std::vector<int8_t> act_exps;
  if (needs_i16) {
    act_exps = quantize_weightset(dense).act_exps;
  }

  std::vector<SweepRow> rows;
  for (const auto& cell : cells) {
    for (double fraction : fractions) {
      ExecStrategy strategy = cell.strategy;
      WeightSet pruned = dense;
      switch (cell.granularity) {
        case Granularity::fine_grained:
          if (fraction > 0.0) pruned = prune_fine(dense, fraction).weights;
          break;
        case Granularity::vector_level: {
          auto res = prune_vector(dense, fraction);
          pruned = std::move(res.weights);
          strategy.mask = std::move(res.mask);
          break;
        }
        case Granularity::kernel_level:
        case Granularity::filter_level:
          strategy.keep = prune_channels(dense, fraction).keep;
          break;
      }

      InferResult result;
      if (strategy.numeric == NumericMode::f32) {
        result = infer(fixture, pruned, strategy);
      } else {
        QuantizeOptions opt;
        opt.fixed_act_exps = act_exps;
        const WeightSet q = quantize_weightset(pruned, opt);
        result = infer(fixture, q, strategy);
      }

      SweepRow row;
      row.strategy = strategy.name();
      row.numeric = to_string(strategy.numeric);
      row.granularity = to_string(cell.granularity);
      row.fraction = fraction;
      row.counters = result.counters;
      row.est_ms = estimate_ms(result.counters, strategy.numeric, params);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

/// Preset sweep suites. 3: pruning-granularity comparison (float32,
/// normal order). 5: loop-order comparison with and without zero skipping
/// (float32, fine-grained). 7: int16 variants with SIMD and zero skipping.
inline std::vector<SweepCell> figure_cells(int figure) {
  auto cell = [](LoopOrder lo, ZeroHandling z, NumericMode n, Granularity g) {
    SweepCell c;
    c.strategy.loop_order = lo;
    c.strategy.zero_handling = z;
    c.strategy.numeric = n;
    c.granularity = g;
    return c;
  };
  using LO = LoopOrder;
  using Z = ZeroHandling;
  using N = NumericMode;
  using G = Granularity;
  switch (figure) {
    case 3:
      return {
          cell(LO::normal, Z::none, N::f32, G::fine_grained),
          cell(LO::normal, Z::skip_if, N::f32, G::fine_grained),
          cell(LO::normal, Z::vector_mask, N::f32, G::vector_level),
          cell(LO::normal, Z::channel_reduced, N::f32, G::filter_level),
      };
    case 5:
      return {
          cell(LO::normal, Z::none, N::f32, G::fine_grained),
          cell(LO::normal, Z::skip_if, N::f32, G::fine_grained),
          cell(LO::weight_prioritized, Z::none, N::f32, G::fine_grained),
          cell(LO::weight_prioritized, Z::skip_if, N::f32, G::fine_grained),
      };
    case 7:
      return {
          cell(LO::normal, Z::none, N::i16, G::fine_grained),
          cell(LO::normal, Z::none, N::i16_simd, G::fine_grained),
          cell(LO::normal, Z::skip_if, N::i16, G::fine_grained),
          cell(LO::weight_prioritized, Z::skip_if, N::i16, G::fine_grained),
      };
    default:
      throw config_error("unknown sweep preset " + std::to_string(figure) +
                         " (expected 3, 5 or 7)");
  }
}

// ---------------------------------------------------------------------------
// CSV / plotting output

inline void write_sweep_csv(const std::vector<SweepRow>& rows,
                            std::ostream& os) {
  os << "strategy,numeric,granularity,fraction,macs,weight_loads,act_reads,"
        "act_writes,branch_evals,simd_ops,est_ms\n";
  os.precision(10);
  for (const auto& r : rows) {
    os << r.strategy << ',' << r.numeric << ',' << r.granularity << ','
       << r.fraction << ',' << r.counters.macs << ',' << r.counters.weight_loads
       << ',' << r.counters.act_reads << ',' << r.counters.act_writes << ','
       << r.counters.branch_evals << ',' << r.counters.simd_ops << ','
       << r.est_ms << '\n';
  }
}

inline void write_gnuplot_script(const std::string& csv_path,
                                 std::ostream& os) {
  os << "# gnuplot script for a sweep CSV (est_ms vs pruning fraction)\n"
     << "set datafile separator ','\n"
     << "set key outside\n"
     << "set xlabel 'pruned fraction'\n"
     << "set ylabel 'estimated ms per inference'\n"
     << "csv = '" << csv_path << "'\n"
     << "plot for [s in system(sprintf(\"tail -n +2 %s | cut -d, -f1 | sort -u\", csv))] \\\n"
     << "  sprintf(\"< awk -F, '$1==\\\"%s\\\"' %s\", s, csv) \\\n"
     << "  using 4:11 with linespoints title s\n";
}

}  // namespace kws
