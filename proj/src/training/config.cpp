#include "mtvrp/training/config.hpp"

#include <set>
#include <stdexcept>

#include "json.hpp"

namespace mtvrp::training {

TrainConfig paper_train_config() {
  TrainConfig c;
  c.epochs = 300;
  c.instances_per_epoch = 100000;
  c.batch_size = 256;
  c.lr = 3e-4;
  c.weight_decay = 1e-6;
  c.lr_decay_epochs = {270, 295};
  c.lr_decay_factor = 0.1;
  c.n = 100;
  c.starts = 100;
  return c;
}

TrainConfig desk_train_config() { return TrainConfig{}; }

policy::ModelConfig desk_model_config() {
  policy::ModelConfig m;
  m.d_model = 64;
  m.n_heads = 4;
  m.n_layers = 2;
  m.d_ff = 128;
  m.rank_frozen = 8;
  m.rank_free = 8;
  return m;
}

void validate(const TrainConfig& c) {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("train config: ") + what);
  };
  need(c.epochs >= 0, "epochs must be >= 0");
  need(c.instances_per_epoch >= 1, "instances_per_epoch must be >= 1");
  need(c.batch_size >= 1, "batch_size must be >= 1");
  need(c.lr > 0, "lr must be positive");
  need(c.weight_decay >= 0, "weight_decay must be >= 0");
  need(c.lr_decay_factor > 0, "lr_decay_factor must be positive");
  need(c.n >= 1, "n must be >= 1");
  need(c.starts >= 2, "starts must be >= 2 for the shared baseline");
  need(c.starts <= c.n, "starts must not exceed n");
  need(c.jobs >= 1, "jobs must be >= 1");
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  double lr = cfg.lr;
  for (int m : cfg.lr_decay_epochs) {
    if (m <= epoch) lr *= cfg.lr_decay_factor;
  }
  return lr;
}

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw std::invalid_argument("unknown key " + where + "." + it.key());
  }
}

template <class T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string serialize_config(const PipelineConfig& cfg) {
  const TrainConfig& t = cfg.train;
  const policy::ModelConfig& m = cfg.model;
  json j;
  j["train"] = {{"epochs", t.epochs},
                {"instances_per_epoch", t.instances_per_epoch},
                {"batch_size", t.batch_size},
                {"lr", t.lr},
                {"weight_decay", t.weight_decay},
                {"lr_decay_epochs", t.lr_decay_epochs},
                {"lr_decay_factor", t.lr_decay_factor},
                {"n", t.n},
                {"starts", t.starts},
                {"seed", t.seed},
                {"jobs", t.jobs}};
  j["model"] = {{"d_model", m.d_model},
                {"n_heads", m.n_heads},
                {"n_layers", m.n_layers},
                {"d_ff", m.d_ff},
                {"rank_frozen", m.rank_frozen},
                {"rank_free", m.rank_free},
                {"activation", std::string(policy::to_string(m.activation))},
                {"routing", std::string(policy::to_string(m.routing))},
                {"expert_kind", std::string(policy::to_string(m.expert_kind))},
                {"lora_beta", m.lora_beta},
                {"logit_clip", m.logit_clip},
                {"norm_softplus_eps", m.norm_softplus_eps},
                {"adapt_embedding", m.adapt_embedding},
                {"adapt_encoder", m.adapt_encoder},
                {"adapt_decoder", m.adapt_decoder}};
  return j.dump(2) + "\n";
}

PipelineConfig parse_config(const std::string& text, const PipelineConfig& base) {
  PipelineConfig out = base;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, {"train", "model"}, "config");
  try {
    if (j.contains("train")) {
      const json& t = j["train"];
      reject_unknown(t,
                     {"epochs", "instances_per_epoch", "batch_size", "lr", "weight_decay", "lr_decay_epochs",
                      "lr_decay_factor", "n", "starts", "seed", "jobs"},
                     "train");
      TrainConfig& c = out.train;
      take(t, "epochs", c.epochs);
      take(t, "instances_per_epoch", c.instances_per_epoch);
      take(t, "batch_size", c.batch_size);
      take(t, "lr", c.lr);
      take(t, "weight_decay", c.weight_decay);
      take(t, "lr_decay_epochs", c.lr_decay_epochs);
      take(t, "lr_decay_factor", c.lr_decay_factor);
      take(t, "n", c.n);
      take(t, "starts", c.starts);
      take(t, "seed", c.seed);
      take(t, "jobs", c.jobs);
    }
    if (j.contains("model")) {
      const json& mj = j["model"];
      reject_unknown(mj,
                     {"d_model", "n_heads", "n_layers", "d_ff", "rank_frozen", "rank_free", "activation", "routing",
                      "expert_kind", "lora_beta", "logit_clip", "norm_softplus_eps", "adapt_embedding",
                      "adapt_encoder", "adapt_decoder"},
                     "model");
      policy::ModelConfig& m = out.model;
      take(mj, "d_model", m.d_model);
      take(mj, "n_heads", m.n_heads);
      take(mj, "n_layers", m.n_layers);
      take(mj, "d_ff", m.d_ff);
      take(mj, "rank_frozen", m.rank_frozen);
      take(mj, "rank_free", m.rank_free);
      if (mj.contains("activation")) m.activation = policy::parse_activation(mj["activation"].get<std::string>());
      if (mj.contains("routing")) m.routing = policy::parse_routing(mj["routing"].get<std::string>());
      if (mj.contains("expert_kind")) m.expert_kind = policy::parse_expert_kind(mj["expert_kind"].get<std::string>());
      take(mj, "lora_beta", m.lora_beta);
      take(mj, "logit_clip", m.logit_clip);
      take(mj, "norm_softplus_eps", m.norm_softplus_eps);
      take(mj, "adapt_embedding", m.adapt_embedding);
      take(mj, "adapt_encoder", m.adapt_encoder);
      take(mj, "adapt_decoder", m.adapt_decoder);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config has a field of the wrong type: ") + e.what());
  }
  return out;
}

}  // namespace mtvrp::training
