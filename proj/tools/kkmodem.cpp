// kkmodem: end-to-end runs, sweeps, throughput benchmarks and plot tables.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kkmodem/kkmodem.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string preset = "paper";
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON config file overlaid on the preset")->check(CLI::ExistingFile);
  app->add_option("--preset", c.preset, "Base preset")->check(CLI::IsMember({"paper", "ci"}));
  app->add_option("--seed", c.seed, "Random seed (overrides the config)");
  app->add_option("--out", c.out, "Output directory (overrides the config)");
}

kkm::ExperimentConfig load(const Common& c) {
  kkm::ExperimentConfig cfg = c.config.empty() ? kkm::preset_config(c.preset) : kkm::load_config(c.config, c.preset);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  cfg.validate();
  return cfg;
}

void print_run(const kkm::RunReport& r) {
  for (const auto& p : r.points) {
    std::cout << p.distance_km << " km  " << p.status;
    if (p.ok()) std::cout << "  BER " << p.metrics.ber << "  Q " << p.metrics.q_db << " dB  EVM " << p.metrics.evm_pct << " %";
    else std::cout << "  " << p.message;
    std::cout << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Minimum-phase QAM modem and link simulator with a streaming Kramers-Kronig receiver"};
  app.require_subcommand(1);

  Common run_c, sweep_c, bench_c, plot_c, stream_c, rx_c;
  auto* run = app.add_subcommand("run", "Transmit over the link and measure at every monitored distance");
  add_common(run, run_c);

  auto* sweep = app.add_subcommand("sweep", "Run the configured parameter sweep");
  add_common(sweep, sweep_c);

  auto* bench = app.add_subcommand("bench", "Measure receiver throughput over a back-to-back capture");
  add_common(bench, bench_c);
  std::size_t bench_samples = std::size_t{1} << 22;
  int repeats = 5;
  bench->add_option("--samples", bench_samples, "ADC samples per repeat");
  bench->add_option("--repeats", repeats, "Number of timed repeats")->check(CLI::PositiveNumber);

  auto* plot = app.add_subcommand("plot-data", "Run and write plot-ready CSV tables");
  add_common(plot, plot_c);

  auto* stream = app.add_subcommand("stream", "Continuous receive over a repeating frame with windowed Q");
  add_common(stream, stream_c);
  std::size_t stream_samples = std::size_t{1} << 26;
  double window_s = 1e-3;
  stream->add_option("--samples", stream_samples, "ADC samples to receive");
  stream->add_option("--window", window_s, "Windowed-Q length in seconds")->check(CLI::PositiveNumber);

  auto* rx = app.add_subcommand("rx", "Receive a raw ADC capture and write soft symbols and bits");
  add_common(rx, rx_c);
  std::string rx_input;
  double rx_dispersion = 0.0;
  rx->add_option("input", rx_input, "ADC capture (.raw with .json sidecar)")->required()->check(CLI::ExistingFile);
  rx->add_option("--dispersion", rx_dispersion, "Accumulated dispersion to compensate (ps/nm)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto cfg = load(run_c);
      const auto rep = kkm::run_single(cfg);
      kkm::write_json(fs::path(cfg.output_dir) / "report.json", kkm::to_json(rep));
      print_run(rep);
    } else if (*sweep) {
      const auto cfg = load(sweep_c);
      kkm::require(cfg.sweep.has_value(), "config has no sweep section");
      const auto rep = kkm::run_sweep(cfg);
      fs::create_directories(cfg.output_dir);
      std::ofstream csv(fs::path(cfg.output_dir) / "sweep.csv");
      kkm::write_sweep_csv(rep, csv);
      kkm::write_json(fs::path(cfg.output_dir) / "sweep.json", kkm::to_json(rep));
      kkm::write_sweep_csv(rep, std::cout);
      for (const auto& [km, v] : rep.argmax) std::cout << "best " << cfg.sweep->axis << " at " << km << " km: " << v << '\n';
    } else if (*bench) {
      const auto cfg = load(bench_c);
      kkm::require(bench_samples >= 4 * cfg.rx.kk_plan.buffer_len, "bench: --samples must cover at least 4 buffers");
      const auto rep = kkm::bench_throughput(cfg, bench_samples, repeats);
      kkm::write_json(fs::path(cfg.output_dir) / "bench.json", kkm::to_json(rep));
      std::cout << "median " << rep.median_samples_per_s << " samples/s (" << rep.median_samples_per_s / rep.required_samples_per_s
                << " of real time), max deviation " << 100.0 * rep.max_deviation << " %\n";
    } else if (*plot) {
      const auto cfg = load(plot_c);
      const auto rep = kkm::run_single(cfg);
      kkm::write_json(fs::path(cfg.output_dir) / "report.json", kkm::to_json(rep));
      for (const auto& f : kkm::write_plot_data(rep, cfg.output_dir)) std::cout << f.string() << '\n';
    } else if (*stream) {
      const auto cfg = load(stream_c);
      const auto rep = kkm::run_streaming(cfg, stream_samples, window_s);
      kkm::write_json(fs::path(cfg.output_dir) / "stream.json", kkm::to_json(rep));
      fs::create_directories(cfg.output_dir);
      std::ofstream csv(fs::path(cfg.output_dir) / "windowed_q.csv");
      csv << "time_s,q_db\n";
      for (const auto& w : rep.windows) csv << w.time_s << ',' << w.q_db << '\n';
      std::cout << rep.adc_samples << " samples, " << rep.windows.size() << " windows, steady Q "
                << rep.steady_q_mean_db << " +- " << rep.steady_q_std_db << " dB, diverged " << rep.diverged << '\n';
    } else if (*rx) {
      const auto cfg = load(rx_c);
      const auto adc = kkm::raw::read_real(rx_input);
      kkm::require(std::abs(adc.sample_rate_hz - cfg.frontend.adc_rate_hz) < 1.0, "capture rate differs from the config ADC rate");
      const auto tx = kkm::generate_tx(cfg.tx);
      const auto rc = kkm::detail::rx_config(cfg, rx_dispersion, nullptr);
      kkm::RxPipeline p(rc, tx.symbols);
      const auto bufs = kkm::stream_buffers(adc.samples, rc.kk_plan);
      for (const auto& b : bufs.buffers) p.process_buffer(b);
      p.flush();
      fs::create_directories(cfg.output_dir);
      kkm::raw::write_soft_symbols(fs::path(cfg.output_dir) / "soft.raw", p.output().soft, cfg.tx.baud_hz);
      kkm::raw::write_bits(fs::path(cfg.output_dir) / "bits.raw", p.bits());
      std::ofstream diag(fs::path(cfg.output_dir) / "diagnostics.jsonl");
      p.write_diagnostics_jsonl(diag);
      std::cout << p.output().soft.size() << " symbols\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
