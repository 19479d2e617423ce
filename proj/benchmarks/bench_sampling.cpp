// Naive vs incremental sampling. Besides the usual benchmark output, writes
// sampling_speedup.csv (override with --csv=PATH) with one row per size.

#include <benchmark/benchmark.h>

#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "pixelstack/image_io.hpp"
#include "pixelstack/pixelcnn.hpp"

using namespace pixelstack;

namespace {

const AutoregressiveNet& net() {
  static const AutoregressiveNet n = [] {
    PixelCNNConfig c;
    c.layers = 8;
    c.hidden = 32;
    c.bins = 16;
    Rng rng(1);
    return AutoregressiveNet(c, rng);
  }();
  return n;
}

void BM_SampleNaive(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_naive(net(), 1, side, side, {}, {1.0, ++seed}));
  state.counters["positions"] = static_cast<double>(side * side);
  state.counters["per_position"] = benchmark::Counter(static_cast<double>(side * side),
                                                      benchmark::Counter::kIsIterationInvariantRate | benchmark::Counter::kInvert);
}

void BM_SampleIncremental(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_incremental(net(), 1, side, side, {}, {1.0, ++seed}));
  state.counters["positions"] = static_cast<double>(side * side);
  state.counters["per_position"] = benchmark::Counter(static_cast<double>(side * side),
                                                      benchmark::Counter::kIsIterationInvariantRate | benchmark::Counter::kInvert);
}

BENCHMARK(BM_SampleNaive)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond)->MinTime(1.0);
BENCHMARK(BM_SampleIncremental)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond)->MinTime(1.0);

// Keeps seconds per image for each (mode, side) while printing as usual.
class CollectingReporter : public benchmark::ConsoleReporter {
 public:
  std::map<std::pair<std::string, long>, double> seconds;

  void ReportRuns(const std::vector<Run>& runs) override {
    for (const auto& r : runs) {
      if (r.run_type != Run::RT_Iteration || r.iterations == 0) continue;
      const std::string name = r.run_name.function_name;
      const long side = std::stol(r.run_name.args);
      seconds[{name, side}] = r.real_accumulated_time / static_cast<double>(r.iterations);
    }
    ConsoleReporter::ReportRuns(runs);
  }
};

}  // namespace

int main(int argc, char** argv) {
  std::string csv = "sampling_speedup.csv";
  std::vector<char*> rest;
  for (int i = 0; i < argc; ++i) {
    if (std::strncmp(argv[i], "--csv=", 6) == 0) {
      csv = argv[i] + 6;
    } else {
      rest.push_back(argv[i]);
    }
  }
  int n = static_cast<int>(rest.size());
  benchmark::Initialize(&n, rest.data());
  CollectingReporter reporter;
  benchmark::RunSpecifiedBenchmarks(&reporter);
  benchmark::Shutdown();

  std::vector<CsvRow> rows = {{"side", "layers", "hidden", "naive_seconds", "incremental_seconds",
                               "incremental_seconds_per_position", "speedup"}};
  for (long side : {8L, 16L, 32L}) {
    const auto inc = reporter.seconds.find({"BM_SampleIncremental", side});
    if (inc == reporter.seconds.end()) continue;
    const auto nai = reporter.seconds.find({"BM_SampleNaive", side});
    const bool have_naive = nai != reporter.seconds.end();
    rows.push_back({std::to_string(side), "8", "32", have_naive ? format_double(nai->second) : "",
                    format_double(inc->second), format_double(inc->second / static_cast<double>(side * side)),
                    have_naive ? format_double(nai->second / inc->second) : ""});
  }
  write_csv(rows, csv);
  return 0;
}
