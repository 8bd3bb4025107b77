// Copyright 2026 The cosplit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cosplit/cli.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <type_traits>

#include "cosplit/attacks.hpp"
#include "cosplit/datasets.hpp"
#include "cosplit/dp.hpp"
#include "cosplit/error.hpp"
#include "cosplit/io.hpp"
#include "cosplit/keygen.hpp"
#include "cosplit/network.hpp"
#include "cosplit/reduction.hpp"
#include "cosplit/session.hpp"
#include "cosplit/training.hpp"
#include "cosplit/wire.hpp"

namespace cosplit::cli {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::atomic<bool> g_stop{false};

extern "C" void OnSignal(int) { g_stop.store(true); }

// Everything any subcommand may take. Each subcommand registers only the
// flags it uses.
struct Options {
  std::string data;
  std::string model;
  std::string key;
  std::string out;
  std::string addr;
  std::string log_path;
  std::string cnf;
  std::string widths;
  std::string image_shape;
  std::string bound = "inf";
  std::size_t split_index = 0;
  std::optional<std::size_t> noise_layer;
  double epsilon = kInf;
  double eta = 0.0;
  double xi = 1.0;
  std::size_t epochs = 50;
  std::size_t batch = 32;
  double lr = 0.1;
  double lr_pi = 0.05;
  double lambda = 1.0;
  std::size_t disc_pretrain = 3;
  double alpha = 0.0;
  std::uint64_t seed = 1;
  std::size_t classes = 0;
  std::size_t samples = 0;
  std::size_t steps = 300;
  double step_size = 0.1;
  std::size_t sessions = 0;
  double gamma = 0.0;
  bool check = false;
};

class Summary {
 public:
  explicit Summary(std::ostream& out) : out_(out) { out_ << std::setprecision(17); }
  template <typename T>
  void operator()(const std::string& k, const T& v) {
    out_ << k << '=' << v << '\n';
  }

 private:
  std::ostream& out_;
};

void RequireFile(const std::string& path, const std::string& flag) {
  if (!std::filesystem::is_regular_file(path)) {
    throw UsageError(flag + ": file not found: " + path);
  }
}

std::vector<std::string> SplitOn(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  return parts;
}

template <typename T>
T ParseNumber(const std::string& text, const std::string& what) {
  T v{};
  if constexpr (std::is_floating_point_v<T>) {
    // strtod also accepts "inf".
    char* end = nullptr;
    v = static_cast<T>(std::strtod(text.c_str(), &end));
    if (text.empty() || end != text.c_str() + text.size() || std::isnan(v)) {
      throw UsageError(what + ": not a number: '" + text + "'");
    }
  } else {
    std::istringstream in(text);
    if (!(in >> v) || !in.eof()) throw UsageError(what + ": not a number: '" + text + "'");
  }
  return v;
}

// Data sources: an RLTD file, "images.idx,labels.idx", or
// "blobs:<classes>:<per_class>:<dim>:<spread>[:<seed>[:<sample_seed>]]".
// A sample seed keeps the centers of <seed> and redraws the points.
LabeledSet LoadData(const std::string& source) {
  if (source.rfind("blobs:", 0) == 0) {
    const auto f = SplitOn(source.substr(6), ':');
    if (f.size() < 4 || f.size() > 6) {
      throw UsageError(
          "--data: expected blobs:<classes>:<per_class>:<dim>:<spread>[:<seed>[:<sample_seed>]]");
    }
    const std::uint64_t seed = f.size() >= 5 ? ParseNumber<std::uint64_t>(f[4], "--data") : 1;
    const auto classes = ParseNumber<std::size_t>(f[0], "--data");
    const auto per_class = ParseNumber<std::size_t>(f[1], "--data");
    const auto dim = ParseNumber<std::size_t>(f[2], "--data");
    const auto spread = ParseNumber<double>(f[3], "--data");
    if (f.size() == 6) {
      return GenBlobs(classes, per_class, dim, spread, seed,
                      ParseNumber<std::uint64_t>(f[5], "--data"));
    }
    return GenBlobs(classes, per_class, dim, spread, seed);
  }
  const auto comma = source.find(',');
  if (comma != std::string::npos) {
    const std::string images = source.substr(0, comma);
    const std::string labels = source.substr(comma + 1);
    RequireFile(images, "--data");
    RequireFile(labels, "--data");
    return ReadIdx(images, labels);
  }
  RequireFile(source, "--data");
  return LoadDataset(source);
}

std::vector<std::size_t> ParseWidths(const std::string& text) {
  std::vector<std::size_t> w;
  for (const auto& part : SplitOn(text, ',')) w.push_back(ParseNumber<std::size_t>(part, "--widths"));
  if (w.size() < 2) throw UsageError("--widths: need at least input and output width");
  return w;
}

SplitModel LoadSplitModel(const Options& o) {
  RequireFile(o.model, "--model");
  const Network full = LoadCheckpoint(o.model);
  if (o.split_index == 0 || o.split_index >= full.depth()) {
    throw UsageError("--split-index must lie in [1, " + std::to_string(full.depth() - 1) + "]");
  }
  return SplitModel(full, o.split_index);
}

DerangementKey LoadKey(const std::string& path) {
  RequireFile(path, "--key");
  return DerangementKey::FromText(ReadFileText(path));
}

DpConfig MakeDp(const Options& o, const Network& original_front, const LabeledSet* data) {
  DpConfig cfg;
  cfg.epsilon = o.epsilon;
  cfg.eta = o.eta;
  cfg.noise_layer_index = o.noise_layer;
  if (o.bound == "auto") {
    if (!data) throw UsageError("--bound auto needs --data");
    cfg.bound = CalibrateBound(original_front, cfg.cut(original_front.depth()), data->inputs);
    if (!(cfg.bound > 0.0)) cfg.bound = 1.0;
  } else {
    cfg.bound = ParseNumber<double>(o.bound, "--bound");
  }
  cfg.validate(original_front.depth());
  cfg.noise_scale();  // rejects finite epsilon with an unbounded IR
  return cfg;
}

// A device session against either a remote edge (--addr) or an in-process
// loopback edge hosting the given back-end.
class EdgeLink {
 public:
  EdgeLink(const std::string& addr, const SplitModel& model) {
    if (addr.empty()) {
      local_ = std::make_unique<LoopbackEdge>(model.back());
    } else {
      const auto [host, port] = ParseAddress(addr);
      remote_ = std::make_unique<DeviceSession>(TcpConnect(host, port), model.ir_width(),
                                                model.n_classes());
    }
  }
  DeviceSession& session() { return local_ ? local_->session() : *remote_; }

 private:
  std::unique_ptr<LoopbackEdge> local_;
  std::unique_ptr<DeviceSession> remote_;
};

void AddDpFlags(CLI::App* c, Options& o) {
  c->add_option("--noise-layer", o.noise_layer, "Layer index inside the front-end where noise is added");
  c->add_option("--epsilon", o.epsilon, "Laplace budget parameter (inf disables noise)");
  c->add_option("--eta", o.eta, "Nullification rate in [0,1]")->check(CLI::Range(0.0, 1.0));
  c->add_option("--bound", o.bound, "Clipping bound B, a number, inf or auto");
}

void AddTrainFlags(CLI::App* c, Options& o) {
  c->add_option("--epochs", o.epochs, "Training epochs");
  c->add_option("--batch", o.batch, "Batch size")->check(CLI::Range(1u, kBatchMax));
  c->add_option("--lr", o.lr, "Front-end learning rate")->check(CLI::PositiveNumber);
  c->add_option("--lr-pi", o.lr_pi, "Discriminator learning rate")->check(CLI::PositiveNumber);
  c->add_option("--lambda", o.lambda, "Weight of the distance term")->check(CLI::NonNegativeNumber);
  c->add_option("--disc-pretrain", o.disc_pretrain, "Discriminator warm-up epochs");
}

TrainConfig MakeTrain(const Options& o, const DpConfig& dp) {
  TrainConfig tc;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch;
  tc.lr_theta = o.lr;
  tc.lr_pi = o.lr_pi;
  tc.lambda = o.lambda;
  tc.disc_pretrain_epochs = o.disc_pretrain;
  tc.dp = dp;
  tc.seed = o.seed;
  tc.validate();
  return tc;
}

Network WithFront(const Network& front, const SplitModel& model) {
  Network f = front;
  f.set_trainable(true);
  Network back = model.back();
  back.set_trainable(true);
  return Network::Concat(f, back);
}

// --- subcommands -----------------------------------------------------------

void CmdPretrain(const Options& o, Summary& s) {
  const LabeledSet data = LoadData(o.data);
  auto widths = ParseWidths(o.widths);
  if (widths.front() != data.inputs.cols() || widths.back() != data.n_classes) {
    throw UsageError("--widths must start at the input width " +
                     std::to_string(data.inputs.cols()) + " and end at " +
                     std::to_string(data.n_classes) + " classes");
  }
  Network model = MakeBackbone(widths, o.seed);
  if (o.split_index == 0 || o.split_index >= model.depth()) {
    throw UsageError("--split-index must lie in [1, " + std::to_string(model.depth() - 1) + "]");
  }
  TrainConfig tc = MakeTrain(o, DpConfig::Disabled());
  const auto losses = PretrainBackbone(model, data, tc);
  const SplitModel split(model, o.split_index);  // checks the partition is valid
  SaveCheckpoint(model, o.out);
  const auto pred = ArgmaxRows(Predict(model, data.inputs));
  s("epochs", o.epochs);
  s("final_loss", losses.empty() ? 0.0 : losses.back());
  s("train_accuracy", Accuracy(pred, data.labels));
  s("ir_width", split.ir_width());
  s("checkpoint_hash", CheckpointHash(model));
  s("out", o.out);
}

void CmdServe(const Options& o, Summary& s, std::ostream& out) {
  const SplitModel model = LoadSplitModel(o);
  const auto [host, port] = ParseAddress(o.addr.empty() ? "127.0.0.1:0" : o.addr);
  TcpListener listener(host, port);
  EdgeServer server(model.back());
  s("listening", host + ":" + std::to_string(listener.port()));
  out.flush();
  g_stop.store(false);
  std::signal(SIGINT, OnSignal);
  std::signal(SIGTERM, OnSignal);
  server.serve(listener, g_stop, o.sessions);
  s("sessions", server.stats().sessions.load());
  s("forwards", server.stats().forwards.load());
  s("errors", server.stats().errors.load());
}

void CmdRetrain(const Options& o, Summary& s) {
  SplitModel model = LoadSplitModel(o);
  const LabeledSet data = LoadData(o.data);
  const DerangementKey key = LoadKey(o.key);
  if (key.size() != model.n_classes()) throw UsageError("--key size != model class count");
  const DpConfig dp = MakeDp(o, model.original_front(), &data);
  const TrainConfig tc = MakeTrain(o, dp);

  EdgeLink link(o.addr, model);
  SplitDevice device(link.session(), model.front(), dp);
  const TrainResult res = HybridTrain(device, model.original_front(), data, key, tc,
                                      [](const TrainLogRow& r) {
                                        spdlog::debug("{}\t{}\t{}\t{}\t{}", r.epoch, r.batch,
                                                      r.loss_class, r.v, r.epsilon_total);
                                      });
  Rng eval_rng(o.seed ^ 0x243f6a8885a308d3ULL);
  const SplitAccuracy acc = EvaluateSplit(device, data, key, eval_rng);
  link.session().close();

  const Network full = WithFront(model.front(), model);
  SaveCheckpoint(full, o.out);
  if (!o.log_path.empty()) WriteFileAtomic(o.log_path, FormatTrainLog(res.log));
  s("batches", res.log.size());
  if (!res.log.empty()) {
    s("final_loss_class", res.log.back().loss_class);
    s("final_v", res.log.back().v);
    s("epsilon_total", res.log.back().epsilon_total);
  }
  s("bound", dp.bound);
  s("decrypted_accuracy", acc.decrypted);
  s("raw_accuracy", acc.raw);
  s("checkpoint_hash", CheckpointHash(full));
  s("out", o.out);
}

void CmdInfer(const Options& o, Summary& s) {
  SplitModel model = LoadSplitModel(o);
  const LabeledSet data = LoadData(o.data);
  const DerangementKey key = LoadKey(o.key);
  if (key.size() != model.n_classes()) throw UsageError("--key size != model class count");
  const DpConfig dp = MakeDp(o, model.original_front(), &data);
  EdgeLink link(o.addr, model);
  SplitDevice device(link.session(), model.front(), dp);
  Rng rng(o.seed);
  std::vector<std::uint32_t> pred;
  for (std::size_t start = 0; start < data.size(); start += kBatchMax) {
    const std::size_t end = std::min<std::size_t>(data.size(), start + kBatchMax);
    const auto part = device.infer(data.inputs.slice_rows(start, end), key, rng);
    pred.insert(pred.end(), part.begin(), part.end());
  }
  link.session().close();
  std::vector<std::uint32_t> raw(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) raw[i] = key.encrypt(pred[i]);
  if (!o.out.empty()) {
    std::ostringstream text;
    for (std::uint32_t c : pred) text << c << '\n';
    WriteFileAtomic(o.out, text.str());
  }
  s("samples", pred.size());
  s("accuracy", Accuracy(pred, data.labels));
  s("raw_accuracy", Accuracy(raw, data.labels));
}

void CmdAttackInvert(const Options& o, Summary& s) {
  const SplitModel model = LoadSplitModel(o);
  const LabeledSet data = LoadData(o.data);
  const DpConfig dp = MakeDp(o, model.original_front(), &data);
  const std::size_t n = std::min(o.samples == 0 ? std::size_t{100} : o.samples, data.size());
  const Tensor x = data.inputs.slice_rows(0, n);
  Rng rng(o.seed);
  const Tensor z = DpTransform(model.front(), x, dp, rng).output;
  InversionConfig ic;
  ic.steps = o.steps;
  ic.step_size = o.step_size;
  ic.seed = o.seed;
  const InversionResult inv = Invert(model.front(), z, ic);

  std::size_t img_r = 0, img_c = 0;
  if (!o.image_shape.empty()) {
    const auto parts = SplitOn(o.image_shape, 'x');
    if (parts.size() != 2) throw UsageError("--image-shape: expected RxC");
    img_r = ParseNumber<std::size_t>(parts[0], "--image-shape");
    img_c = ParseNumber<std::size_t>(parts[1], "--image-shape");
    if (img_r * img_c != x.cols()) throw UsageError("--image-shape does not match input width");
  }
  std::vector<InversionRow> rows;
  double sum_mse = 0.0, sum_ssim = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor a = x.slice_rows(i, i + 1);
    const Tensor b = inv.x.slice_rows(i, i + 1);
    InversionRow row{i, Mse(a, b), std::nullopt};
    if (img_r) row.ssim = Ssim(a.reshaped({img_r, img_c}), b.reshaped({img_r, img_c}));
    sum_mse += row.mse;
    sum_ssim += row.ssim.value_or(0.0);
    rows.push_back(row);
  }
  if (!o.out.empty()) WriteFileAtomic(o.out, FormatInversionReport(rows));
  s("samples", n);
  s("mean_mse", sum_mse / static_cast<double>(n));
  if (img_r) s("mean_ssim", sum_ssim / static_cast<double>(n));
}

void CmdAttackShadow(const Options& o, Summary& s) {
  SplitModel model = LoadSplitModel(o);
  const LabeledSet data = LoadData(o.data);
  const DerangementKey key = LoadKey(o.key);
  if (key.size() != model.n_classes()) throw UsageError("--key size != model class count");
  const DpConfig dp = MakeDp(o, model.original_front(), &data);
  auto [device_data, server_data] = PartitionNonIid(data, o.alpha, o.seed);
  if (device_data.size() == 0 || server_data.size() == 0) {
    throw UsageError("partition left one side empty");
  }
  const TrainConfig tc = MakeTrain(o, dp);

  // Victim: fine-tuned on the device's share with the secret key.
  {
    LoopbackEdge edge(model.back());
    SplitDevice device(edge.session(), model.front(), dp);
    HybridTrain(device, model.original_front(), device_data, key, tc);
  }
  ShadowConfig sc;
  sc.train = tc;
  sc.seed = o.seed + 1;
  const ShadowEnsemble ens = TrainShadows(model.original_front(), model.back(), server_data, sc);
  Rng rng(o.seed + 2);
  const Tensor victim_ir = DpTransform(model.front(), device_data.inputs, dp, rng).output;
  const auto pred = ClassifyMapping(ens, victim_ir);
  const double lambda_acc = AttackAccuracy(pred, MappingIndex(ens, key));
  if (!o.out.empty()) {
    std::ostringstream text;
    text << std::setprecision(17) << "mappings=" << ens.mappings.size() << '\n'
         << "device_samples=" << device_data.size() << '\n'
         << "server_samples=" << server_data.size() << '\n'
         << "attack_accuracy=" << lambda_acc << '\n';
    WriteFileAtomic(o.out, text.str());
  }
  s("mappings", ens.mappings.size());
  s("attack_accuracy", lambda_acc);
}

void CmdBudget(const Options& o, Summary& s) {
  if (!(o.epsilon > 0.0)) throw UsageError("--epsilon must be positive");
  s("epsilon_total", PrivacyBudget(o.epsilon, o.eta, o.xi));
}

void CmdKeygen(const Options& o, Summary& s) {
  Rng rng(o.seed);
  const DerangementKey key = KeyGen(o.classes, rng);
  WriteFileAtomic(o.out, key.to_text());
  std::ostringstream k;
  for (std::size_t i = 0; i < key.size(); ++i) k << (i ? "," : "") << key.forward()[i];
  s("classes", o.classes);
  s("key", k.str());
  s("derangements", ToDecimal(CountDerangements(o.classes)));
  s("out", o.out);
}

void CmdReduce(const Options& o, Summary& s) {
  RequireFile(o.cnf, "--cnf");
  const CnfInstance f = ParseDimacs(ReadFileText(o.cnf));
  const ReductionNet net = BuildReduction(f);
  std::optional<CompletenessReport> c;
  std::optional<SoundnessReport> snd;
  if (o.check) {
    c = CheckCompleteness(net, f);
    Rng rng(o.seed);
    const double gamma = o.gamma > 0.0 ? o.gamma : 1.0 / (60.0 * static_cast<double>(net.q));
    snd = CheckSoundness(net, f, gamma, 1000, rng);
  }
  const std::string report = FormatReductionReport(std::filesystem::path(o.cnf).filename(), net,
                                                   c ? &*c : nullptr, snd ? &*snd : nullptr);
  if (!o.out.empty()) WriteFileAtomic(o.out, report);
  std::istringstream lines(report);
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    s(line.substr(0, eq), line.substr(eq + 1));
  }
}

void CmdVerifyDp(const Options& o, Summary& s) {
  const double bound = o.bound == "inf" ? 1.0 : ParseNumber<double>(o.bound, "--bound");
  const double epsilon = std::isinf(o.epsilon) ? 1.0 : o.epsilon;
  const std::size_t n = o.samples == 0 ? 1000000 : o.samples;
  const std::vector<double> x{bound};
  const std::vector<double> x_prime{-bound};
  const ScalarFn f = [bound](std::span<const double> v) { return std::clamp(v[0], -bound, bound); };
  Rng rng(o.seed);
  double eps_hat = 0.0;
  double analytic = 0.0;
  if (o.eta == 0.0) {
    eps_hat = VerifyDpScalar(f, x, x_prime, bound, 1.0, epsilon, n, rng);
    analytic = epsilon;
  } else {
    eps_hat = VerifyDpNullified(f, x, x_prime, bound, o.eta, epsilon, n, rng);
    analytic = PrivacyBudget(epsilon, o.eta, 1.0);
  }
  s("epsilon_hat", eps_hat);
  s("epsilon_bound", analytic);
  s("pass", eps_hat <= analytic + 0.1 ? 1 : 0);
}

int ExitCodeFor(Errc code) {
  switch (code) {
    case Errc::kInvalidArgument:
    case Errc::kInvalidClassCount:
    case Errc::kParseError:
    case Errc::kKeySpaceTooLarge:
    case Errc::kTooLarge:
    case Errc::kBadMagic:
    case Errc::kCountMismatch:
    case Errc::kTruncated:
    case Errc::kUncoveredLabel:
    case Errc::kDimensionMismatch:
    case Errc::kInvalidScale:
    case Errc::kInsufficientSamples:
      return kExitUsage;
    default:
      return kExitRuntime;
  }
}

}  // namespace

void ConfigureLogging() {
  static bool once = [] {
    auto logger = spdlog::stderr_color_mt("cosplit");
    spdlog::set_default_logger(logger);
    return true;
  }();
  (void)once;
  const char* env = std::getenv("ROULETTE_LOG");
  const std::string level = env ? env : "error";
  if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else if (level == "info") {
    spdlog::set_level(spdlog::level::info);
  } else {
    spdlog::set_level(spdlog::level::err);
  }
}

std::vector<std::string> MergeConfigFile(const std::vector<std::string>& args,
                                         const std::string& config_text) {
  std::vector<std::string> merged = args;
  std::istringstream in(config_text);
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config: expected key=value: " + line);
    auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t\r");
      const auto e = v.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string flag = "--" + key;
    const bool present = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (present) continue;
    if (value == "true") {
      merged.push_back(flag);
    } else if (value != "false") {
      merged.push_back(flag);
      merged.push_back(value);
    }
  }
  return merged;
}

int Run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  ConfigureLogging();
  Options o;
  std::vector<std::string> args = raw_args;

  // --config is handled before CLI11 sees the arguments.
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                 args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      continue;
    }
    try {
      RequireFile(path, "--config");
      args = MergeConfigFile(args, ReadFileText(path));
    } catch (const UsageError& e) {
      err << "error: " << e.what() << '\n';
      return kExitUsage;
    }
    break;
  }

  CLI::App app{"Split inference with encrypted labels and differential privacy", "cosplit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  auto* pretrain = app.add_subcommand("pretrain", "Train the full model and save a checkpoint");
  pretrain->add_option("--data", o.data, "Training data")->required();
  pretrain->add_option("--widths", o.widths, "Comma-separated layer widths")->required();
  pretrain->add_option("--split-index", o.split_index, "Layer index of the split")->required();
  pretrain->add_option("--out", o.out, "Checkpoint path")->required();
  pretrain->add_option("--seed", o.seed);
  AddTrainFlags(pretrain, o);

  auto* serve = app.add_subcommand("serve", "Run the edge back-end over TCP");
  serve->add_option("--model", o.model, "Full model checkpoint")->required();
  serve->add_option("--split-index", o.split_index)->required();
  serve->add_option("--addr", o.addr, "host:port to listen on (port 0 picks one)");
  serve->add_option("--sessions", o.sessions, "Exit after this many sessions (0 = run until signalled)");

  auto* retrain = app.add_subcommand("retrain", "Fine-tune the front-end against encrypted labels");
  retrain->add_option("--model", o.model)->required();
  retrain->add_option("--split-index", o.split_index)->required();
  retrain->add_option("--data", o.data)->required();
  retrain->add_option("--key", o.key)->required();
  retrain->add_option("--out", o.out, "Checkpoint with the retrained front-end")->required();
  retrain->add_option("--addr", o.addr, "Remote edge host:port (default: in-process)");
  retrain->add_option("--log", o.log_path, "Training log path");
  retrain->add_option("--seed", o.seed);
  AddTrainFlags(retrain, o);
  AddDpFlags(retrain, o);

  auto* infer = app.add_subcommand("infer", "Co-inference with label decryption");
  infer->add_option("--model", o.model)->required();
  infer->add_option("--split-index", o.split_index)->required();
  infer->add_option("--data", o.data)->required();
  infer->add_option("--key", o.key)->required();
  infer->add_option("--addr", o.addr);
  infer->add_option("--out", o.out, "Predicted classes, one per line");
  infer->add_option("--seed", o.seed);
  AddDpFlags(infer, o);

  auto* invert = app.add_subcommand("attack-invert", "Model inversion against intercepted IR");
  invert->add_option("--model", o.model)->required();
  invert->add_option("--split-index", o.split_index)->required();
  invert->add_option("--data", o.data)->required();
  invert->add_option("--samples", o.samples, "Samples to attack (default 100)");
  invert->add_option("--steps", o.steps)->check(CLI::PositiveNumber);
  invert->add_option("--step-size", o.step_size)->check(CLI::PositiveNumber);
  invert->add_option("--image-shape", o.image_shape, "RxC, enables SSIM");
  invert->add_option("--out", o.out, "Report path");
  invert->add_option("--seed", o.seed);
  AddDpFlags(invert, o);

  auto* shadow = app.add_subcommand("attack-shadow", "Shadow-model key identification");
  shadow->add_option("--model", o.model)->required();
  shadow->add_option("--split-index", o.split_index)->required();
  shadow->add_option("--data", o.data)->required();
  shadow->add_option("--key", o.key)->required();
  shadow->add_option("--alpha", o.alpha, "Non-iid level in [0,1]")->check(CLI::Range(0.0, 1.0));
  shadow->add_option("--out", o.out, "Report path");
  shadow->add_option("--seed", o.seed);
  AddTrainFlags(shadow, o);
  AddDpFlags(shadow, o);

  auto* budget = app.add_subcommand("budget", "Composed privacy budget");
  budget->add_option("--epsilon", o.epsilon)->required();
  budget->add_option("--eta", o.eta)->check(CLI::Range(0.0, 1.0));
  budget->add_option("--xi", o.xi)->check(CLI::NonNegativeNumber);

  auto* keygen = app.add_subcommand("keygen", "Sample a derangement key");
  keygen->add_option("--classes", o.classes)->required();
  keygen->add_option("--seed", o.seed);
  keygen->add_option("--out", o.out)->required();

  auto* reduce = app.add_subcommand("reduce", "Build the 3SAT reduction network");
  reduce->add_option("--cnf", o.cnf, "DIMACS file")->required();
  reduce->add_flag("--check", o.check, "Run the exhaustive checks");
  reduce->add_option("--gamma", o.gamma, "Approximation radius (default 1/(60Q))");
  reduce->add_option("--out", o.out, "Report path");
  reduce->add_option("--seed", o.seed);

  auto* verify = app.add_subcommand("verify-dp", "Monte-Carlo check of the scalar mechanism");
  verify->add_option("--bound", o.bound);
  verify->add_option("--epsilon", o.epsilon);
  verify->add_option("--eta", o.eta)->check(CLI::Range(0.0, 1.0));
  verify->add_option("--samples", o.samples);
  verify->add_option("--seed", o.seed);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  Summary s(out);
  try {
    if (*pretrain) CmdPretrain(o, s);
    else if (*serve) CmdServe(o, s, out);
    else if (*retrain) CmdRetrain(o, s);
    else if (*infer) CmdInfer(o, s);
    else if (*invert) CmdAttackInvert(o, s);
    else if (*shadow) CmdAttackShadow(o, s);
    else if (*budget) CmdBudget(o, s);
    else if (*keygen) CmdKeygen(o, s);
    else if (*reduce) CmdReduce(o, s);
    else if (*verify) CmdVerifyDp(o, s);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return ExitCodeFor(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace cosplit::cli
