#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "absa/models.hpp"
#include "absa/params.hpp"
#include "absa/tape.hpp"
#include "absa/tensor.hpp"

namespace absa::testing {

// Below this magnitude both gradients are treated as zero for relative error.
inline constexpr double kGradFloor = 1e-6;

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
  return std::abs(analytic - numeric) / scale;
}

inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1;
  return v[std::min(idx, v.size() - 1)];
}

struct GradCheck {
  std::vector<double> errors;  // coordinates where either gradient exceeds the floor
  std::size_t coordinates = 0;
  double p95 = 0.0;
  double max = 0.0;
};

// Compares tape backprop of `build` against central differences over every
// scalar of `store`. `build` must be deterministic (reseed any dropout rng).
inline GradCheck check_gradients(ParameterStore& store, const std::function<Var(Tape&)>& build, double eps = 1e-5) {
  Gradients grads(store);
  {
    Tape tape;
    const Var loss = build(tape);
    tape.backward(loss, grads);
  }
  const std::vector<double> analytic = grads.flatten(store);
  const std::vector<double> start = store.flatten();
  auto f = [&](std::span<const double> p) {
    store.assign_flat(p);
    Tape tape(false);
    return tape.value(build(tape))[0];
  };
  const std::vector<double> numeric = ops::finite_diff_gradient(f, start, eps);
  store.assign_flat(start);

  GradCheck out;
  out.coordinates = analytic.size();
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (std::max(std::abs(analytic[i]), std::abs(numeric[i])) <= kGradFloor) continue;
    out.errors.push_back(relative_error(analytic[i], numeric[i]));
  }
  out.p95 = percentile(out.errors, 0.95);
  out.max = out.errors.empty() ? 0.0 : *std::max_element(out.errors.begin(), out.errors.end());
  return out;
}

inline void randomize(ParameterStore& store, Rng& rng, double scale = 0.5) {
  for (ParamId id = 0; id < store.count(); ++id)
    for (auto& v : store.value(id).data()) v = rng.uniform(-scale, scale);
}

// Toy setting: 50-word vocabulary, dimension 8, three aspects.
struct Toy {
  AspectCatalog catalog{{"Allgemein", "Zugfahrt", "Sicherheit"}};
  EmbeddingTable table{8};
  std::vector<std::vector<std::string>> docs;
  std::vector<LabelVector> gold;

  Toy() {
    Rng rng(5);
    std::vector<double> row(8);
    for (int i = 0; i < 50; ++i) {
      for (auto& v : row) v = rng.uniform(-0.5, 0.5);
      table.add_word("w" + std::to_string(i), row);
    }
    table.set_subwords({997, 3, 4});
    for (const char* g : {"<zu", "zug", "ug>", "<bah", "ahn>"}) {
      for (auto& v : row) v = rng.uniform(-0.5, 0.5);
      table.set_bucket(table.bucket_of(g), row);
    }
    docs = {{"w1", "w7", "zugfahrten", "w3", "w44", "w9", "bahnhof"}, {"w12", "zug"}};
    gold = {LabelVector{{2, 0, 1}}, LabelVector{{0, 3, 0}}};
  }

  ModelConfig config(Architecture arch) const {
    ModelConfig c;
    c.arch = arch;
    c.filter_widths = {3, 4, 5};
    c.filters_per_width = 4;
    c.hidden = 6;
    c.dropout = 0.5;
    return c;
  }

  Model model(Architecture arch) const {
    Model m(config(arch), catalog, table, docs, 11);
    Rng rng(17);
    randomize(m.params(), rng);
    return m;
  }

  // Summed training loss over both documents, dropout masks drawn from a
  // fixed seed so repeated evaluations agree.
  Var loss(const Model& m, Tape& tape) const {
    Rng rng(99);
    std::vector<Var> parts;
    if (is_pipeline(m.config().arch)) {
      parts.push_back(m.pipeline_loss(tape, docs[0], 0, Polarity::negative, Mode::train, rng));
      parts.push_back(m.pipeline_loss(tape, docs[0], 2, Polarity::positive, Mode::train, rng));
      parts.push_back(m.pipeline_loss(tape, docs[1], 1, Polarity::neutral, Mode::train, rng));
    } else {
      for (std::size_t i = 0; i < docs.size(); ++i)
        parts.push_back(m.joint_loss(tape, docs[i], gold[i], Mode::train, rng));
    }
    return ag::sum(tape, parts);
  }
};

// ---------------------------------------------------------------------------
// Subprocess helpers for CLI tests.

struct CommandResult {
  int status = -1;
  std::string output;
};

inline CommandResult run_command(const std::string& cmd) {
  CommandResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed: " + cmd);
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int st = pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

// A child process whose first stdout line is read back, killed on destruction.
class ChildProcess {
 public:
  explicit ChildProcess(const std::vector<std::string>& argv) {
    int fds[2];
    if (pipe(fds) != 0) throw std::runtime_error("pipe failed");
    pid_ = fork();
    if (pid_ < 0) throw std::runtime_error("fork failed");
    if (pid_ == 0) {
      dup2(fds[1], STDOUT_FILENO);
      close(fds[0]);
      close(fds[1]);
      std::vector<char*> args;
      for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
      args.push_back(nullptr);
      execv(args[0], args.data());
      _exit(127);
    }
    close(fds[1]);
    out_ = fdopen(fds[0], "r");
  }
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;
  ~ChildProcess() {
    if (pid_ > 0) {
      kill(pid_, SIGTERM);
      waitpid(pid_, nullptr, 0);
    }
    if (out_) fclose(out_);
  }

  std::string read_line() {
    std::string line;
    int c;
    while ((c = fgetc(out_)) != EOF && c != '\n') line.push_back(static_cast<char>(c));
    return line;
  }

 private:
  pid_t pid_ = -1;
  FILE* out_ = nullptr;
};

}  // namespace absa::testing
