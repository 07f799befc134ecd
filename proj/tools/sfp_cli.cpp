// Command-line front end.  Everything goes through the C API in sfp/capi.h;
// reports print to stdout as JSON, --verbose echoes the resolved
// configuration to stderr, exit codes are 0 (done), 1 (failure), 2 (usage).

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "sfp/capi.h"

namespace {

using Json = nlohmann::ordered_json;

void ok(int rc) {
  if (rc != SFP_OK) throw std::runtime_error(sfp_last_error());
}

struct ModelFree {
  void operator()(sfp_model* m) const { sfp_model_free(m); }
};
struct FingerprintFree {
  void operator()(sfp_fingerprint* f) const { sfp_fingerprint_free(f); }
};
struct RecordFree {
  void operator()(sfp_attack_record* r) const { sfp_attack_record_free(r); }
};
struct CorpusFree {
  void operator()(sfp_corpus* c) const { sfp_corpus_free(c); }
};
struct SimnetFree {
  void operator()(sfp_simnet* n) const { sfp_simnet_free(n); }
};
struct StringFree {
  void operator()(char* s) const { sfp_string_free(s); }
};

using ModelPtr = std::unique_ptr<sfp_model, ModelFree>;
using FingerprintPtr = std::unique_ptr<sfp_fingerprint, FingerprintFree>;
using RecordPtr = std::unique_ptr<sfp_attack_record, RecordFree>;
using CorpusPtr = std::unique_ptr<sfp_corpus, CorpusFree>;
using SimnetPtr = std::unique_ptr<sfp_simnet, SimnetFree>;
using StringPtr = std::unique_ptr<char, StringFree>;

ModelPtr load_model_dir(const std::string& dir) {
  sfp_model* m = nullptr;
  ok(sfp_model_load(dir.c_str(), &m));
  return ModelPtr(m);
}

FingerprintPtr load_fp_file(const std::string& path) {
  sfp_fingerprint* f = nullptr;
  ok(sfp_fingerprint_load(path.c_str(), &f));
  return FingerprintPtr(f);
}

std::vector<ModelPtr> load_model_dirs(const std::vector<std::string>& dirs) {
  std::vector<ModelPtr> out;
  for (const std::string& d : dirs) out.push_back(load_model_dir(d));
  return out;
}

std::vector<const sfp_model*> raw_handles(const std::vector<ModelPtr>& models) {
  std::vector<const sfp_model*> out;
  for (const ModelPtr& m : models) out.push_back(m.get());
  return out;
}

void write_text(const std::string& path, const char* text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write to " + path + " failed");
}

std::vector<std::string> split_warnings(const char* joined) {
  std::vector<std::string> out;
  std::string all(joined);
  std::size_t at = 0;
  while (at < all.size()) {
    std::size_t nl = all.find('\n', at);
    if (nl == std::string::npos) nl = all.size();
    out.push_back(all.substr(at, nl - at));
    at = nl + 1;
  }
  return out;
}

// Shared flags and the per-command configuration echo.
struct Session {
  bool verbose = false;
  bool timestamp = false;

  void echo(const Json& cfg) const {
    if (verbose) std::cerr << cfg.dump() << "\n";
  }
};

struct ProfileDims {
  int n_f = 0;
  int h = 0;
  std::vector<int> widths;
};

ProfileDims profile_dims(const std::string& name) {
  if (name == "toy") return {4, 8, {4, 4, 8, 16, 32, 32}};
  if (name == "paper") return {8, 256, {64, 64, 128, 256, 512, 512}};
  throw std::runtime_error("unknown profile '" + name +
                           "' (expected toy or paper)");
}

int enum_code(const std::string& value, const char* what,
              const std::map<std::string, int>& table) {
  auto it = table.find(value);
  if (it == table.end())
    throw std::runtime_error(std::string("unknown ") + what + " '" + value +
                             "'");
  return it->second;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformation-invariant weight fingerprints for transformer "
               "attention stacks"};
  app.require_subcommand(1);
  // Long-form flags only; the short -h would collide with --h below.
  app.set_help_flag("--help", "print help and exit");

  auto session = std::make_shared<Session>();
  app.add_flag("--verbose", session->verbose,
               "echo the resolved configuration to stderr");
  app.add_flag("--timestamp", session->timestamp,
               "add a generated_at field to JSON reports");

  // ---- generate ----
  auto gen = app.add_subcommand(
      "generate", "write a family of toy model bundles (target, related "
                  "copies, unrelated models)");
  gen->fallthrough();
  struct GenOpts {
    std::string out;
    std::uint64_t seed = 0;
    int d_model = 32, d = 16, heads = 1, kv_heads = 1, layers = 8, vocab = 0;
    double init_scale = 0.05;
    int related = 0, unrelated = 0;
    double perturbation = 0.05;
  };
  auto gen_opts = std::make_shared<GenOpts>();
  gen->add_option("--out", gen_opts->out, "family directory")->required();
  gen->add_option("--seed", gen_opts->seed, "generation seed");
  gen->add_option("--d-model", gen_opts->d_model, "model width");
  gen->add_option("--d", gen_opts->d, "attention inner width");
  gen->add_option("--heads", gen_opts->heads, "attention heads");
  gen->add_option("--kv-heads", gen_opts->kv_heads, "key/value heads");
  gen->add_option("--layers", gen_opts->layers, "attention layers");
  gen->add_option("--vocab", gen_opts->vocab,
                  "vocabulary size (0: no embedding)");
  gen->add_option("--init-scale", gen_opts->init_scale, "weight scale");
  gen->add_option("--related", gen_opts->related, "related copies to derive");
  gen->add_option("--unrelated", gen_opts->unrelated,
                  "unrelated models to generate");
  gen->add_option("--perturbation", gen_opts->perturbation,
                  "relative perturbation for related copies");
  gen->callback([session, gen_opts] {
    const GenOpts& o = *gen_opts;
    session->echo(Json{{"command", "generate"},
                       {"out", o.out},
                       {"seed", o.seed},
                       {"d_model", o.d_model},
                       {"d", o.d},
                       {"heads", o.heads},
                       {"kv_heads", o.kv_heads},
                       {"layers", o.layers},
                       {"vocab", o.vocab},
                       {"init_scale", o.init_scale},
                       {"related", o.related},
                       {"unrelated", o.unrelated},
                       {"perturbation", o.perturbation}});
    sfp_model* raw = nullptr;
    ok(sfp_model_generate_toy(o.d_model, o.d, o.heads, o.kv_heads, o.layers,
                              o.vocab, o.init_scale, o.seed, &raw));
    ModelPtr target(raw);
    ok(sfp_model_save(target.get(), (o.out + "/target").c_str()));
    Json doc{{"kind", "generate"},
             {"out", o.out},
             {"target", sfp_model_id(target.get())}};
    Json rel = Json::array(), unrel = Json::array();
    for (int i = 0; i < o.related; ++i) {
      sfp_model* r = nullptr;
      ok(sfp_model_derive_related(target.get(), o.perturbation,
                                  o.seed + 0x10000 + std::uint64_t(i), &r));
      ModelPtr rp(r);
      char name[32];
      std::snprintf(name, sizeof name, "/rel-%03d", i);
      ok(sfp_model_save(rp.get(), (o.out + name).c_str()));
      rel.push_back(sfp_model_id(rp.get()));
    }
    for (int i = 0; i < o.unrelated; ++i) {
      sfp_model* u = nullptr;
      ok(sfp_model_generate_toy(o.d_model, o.d, o.heads, o.kv_heads, o.layers,
                                o.vocab, o.init_scale,
                                o.seed + 0x20000 + std::uint64_t(i), &u));
      ModelPtr up(u);
      char name[32];
      std::snprintf(name, sizeof name, "/unr-%03d", i);
      ok(sfp_model_save(up.get(), (o.out + name).c_str()));
      unrel.push_back(sfp_model_id(up.get()));
    }
    doc["related"] = std::move(rel);
    doc["unrelated"] = std::move(unrel);
    std::cout << doc.dump(2) << "\n";
  });

  // ---- extract ----
  auto ext = app.add_subcommand("extract",
                                "extract a fingerprint from a model bundle");
  ext->fallthrough();
  ext->set_help_flag("--help", "print help and exit");
  struct ExtOpts {
    std::string model, out, profile;
    int n_f = 4, h = 8, start = 0;
    bool pad = false;
  };
  auto ext_opts = std::make_shared<ExtOpts>();
  ext->add_option("--model", ext_opts->model, "model bundle directory")
      ->required();
  ext->add_option("--out", ext_opts->out, "fingerprint file to write")
      ->required();
  auto ext_nf = ext->add_option("--n-f", ext_opts->n_f, "layers fingerprinted");
  auto ext_h = ext->add_option("--h", ext_opts->h, "values kept per spectrum");
  ext->add_option("--start", ext_opts->start, "first layer of the window");
  ext->add_flag("--pad", ext_opts->pad,
                "zero-fill when a spectrum is shorter than h");
  ext->add_option("--profile", ext_opts->profile,
                  "toy (n_f 4, h 8) or paper (n_f 8, h 256) defaults");
  ext->callback([session, ext_opts, ext_nf, ext_h] {
    ExtOpts& o = *ext_opts;
    if (!o.profile.empty()) {
      ProfileDims dims = profile_dims(o.profile);
      if (ext_nf->count() == 0) o.n_f = dims.n_f;
      if (ext_h->count() == 0) o.h = dims.h;
    }
    session->echo(Json{{"command", "extract"},
                       {"model", o.model},
                       {"out", o.out},
                       {"n_f", o.n_f},
                       {"h", o.h},
                       {"start", o.start},
                       {"pad", o.pad}});
    ModelPtr model = load_model_dir(o.model);
    sfp_fingerprint* raw = nullptr;
    ok(sfp_fingerprint_extract_window(model.get(), o.start, o.n_f, o.h,
                                      o.pad ? 1 : 0, &raw));
    FingerprintPtr fp(raw);
    ok(sfp_fingerprint_save(fp.get(), o.out.c_str()));
    char* warn = nullptr;
    ok(sfp_fingerprint_warnings(fp.get(), &warn));
    StringPtr warn_owner(warn);
    Json doc{{"kind", "extract"},
             {"model", sfp_fingerprint_model_id(fp.get())},
             {"n_f", o.n_f},
             {"h", o.h},
             {"start", o.start},
             {"out", o.out},
             {"warnings", split_warnings(warn)}};
    std::cout << doc.dump(2) << "\n";
  });

  // ---- compare ----
  auto cmp = app.add_subcommand("compare", "distance between two fingerprints");
  cmp->fallthrough();
  struct CmpOpts {
    std::string a, b, out_json;
  };
  auto cmp_opts = std::make_shared<CmpOpts>();
  cmp->add_option("--a", cmp_opts->a, "first fingerprint file")->required();
  cmp->add_option("--b", cmp_opts->b, "second fingerprint file")->required();
  cmp->add_option("--out-json", cmp_opts->out_json, "also write the report here");
  cmp->callback([session, cmp_opts] {
    const CmpOpts& o = *cmp_opts;
    session->echo(Json{{"command", "compare"}, {"a", o.a}, {"b", o.b}});
    FingerprintPtr a = load_fp_file(o.a);
    FingerprintPtr b = load_fp_file(o.b);
    char* doc = nullptr;
    ok(sfp_compare_report(a.get(), b.get(), session->timestamp ? 1 : 0, &doc));
    StringPtr owner(doc);
    std::cout << doc;
    if (!o.out_json.empty()) write_text(o.out_json, doc);
  });

  // ---- attack ----
  auto atk = app.add_subcommand("attack", "weight-space transformations");
  atk->require_subcommand(1);
  atk->fallthrough();

  struct AtkOpts {
    std::string model, out, record;
    std::uint64_t seed = 0;
    bool per_layer = false;
  };
  auto atk_opts = std::make_shared<AtkOpts>();
  auto add_basic_attack = [&](const char* name, const char* help,
                              bool with_per_layer) {
    auto sub = atk->add_subcommand(name, help);
    sub->fallthrough();
    sub->add_option("--model", atk_opts->model, "model bundle directory")
        ->required();
    sub->add_option("--out", atk_opts->out, "transformed bundle directory")
        ->required();
    sub->add_option("--seed", atk_opts->seed, "attack seed");
    sub->add_option("--record", atk_opts->record,
                    "write the replayable attack record here");
    if (with_per_layer)
      sub->add_flag("--per-layer", atk_opts->per_layer,
                    "fresh linear factors for every layer");
    return sub;
  };

  auto run_basic_attack = [session, atk_opts](const char* kind) {
    const AtkOpts& o = *atk_opts;
    session->echo(Json{{"command", std::string("attack ") + kind},
                       {"model", o.model},
                       {"out", o.out},
                       {"seed", o.seed},
                       {"per_layer", o.per_layer},
                       {"record", o.record}});
    ModelPtr model = load_model_dir(o.model);
    sfp_model* out_raw = nullptr;
    sfp_attack_record* rec_raw = nullptr;
    sfp_attack_record** rec_slot = o.record.empty() ? nullptr : &rec_raw;
    std::string k(kind);
    if (k == "permute")
      ok(sfp_attack_permutation(model.get(), atk_opts->seed, &out_raw,
                                rec_slot));
    else if (k == "linmap")
      ok(sfp_attack_linear(model.get(), atk_opts->seed,
                           atk_opts->per_layer ? 1 : 0, &out_raw, rec_slot));
    else
      ok(sfp_attack_combined(model.get(), atk_opts->seed, &out_raw, rec_slot));
    ModelPtr out(out_raw);
    RecordPtr rec(rec_raw);
    ok(sfp_model_save(out.get(), o.out.c_str()));
    if (rec) ok(sfp_attack_record_save(rec.get(), o.record.c_str()));
    Json doc{{"kind", std::string("attack-") + kind},
             {"input", sfp_model_id(model.get())},
             {"output", sfp_model_id(out.get())},
             {"out", o.out}};
    if (!o.record.empty()) doc["record"] = o.record;
    std::cout << doc.dump(2) << "\n";
  };

  add_basic_attack("permute", "shared row shuffle of the input space", false)
      ->callback([run_basic_attack] { run_basic_attack("permute"); });
  add_basic_attack("linmap", "invertible maps inside each layer", true)
      ->callback([run_basic_attack] { run_basic_attack("linmap"); });
  add_basic_attack("combined", "permutation plus linear maps", false)
      ->callback([run_basic_attack] { run_basic_attack("combined"); });

  struct ReplayOpts {
    std::string model, record, out;
  };
  auto replay_opts = std::make_shared<ReplayOpts>();
  auto add_replay = [&](const char* name, const char* help) {
    auto sub = atk->add_subcommand(name, help);
    sub->fallthrough();
    sub->add_option("--model", replay_opts->model, "model bundle directory")
        ->required();
    sub->add_option("--record", replay_opts->record, "attack record file")
        ->required();
    sub->add_option("--out", replay_opts->out, "output bundle directory")
        ->required();
    return sub;
  };
  auto run_replay = [session, replay_opts](bool invert) {
    const ReplayOpts& o = *replay_opts;
    session->echo(Json{{"command", invert ? "attack invert" : "attack apply"},
                       {"model", o.model},
                       {"record", o.record},
                       {"out", o.out}});
    ModelPtr model = load_model_dir(o.model);
    sfp_attack_record* rec_raw = nullptr;
    ok(sfp_attack_record_load(o.record.c_str(), &rec_raw));
    RecordPtr rec(rec_raw);
    sfp_model* out_raw = nullptr;
    if (invert)
      ok(sfp_attack_invert(model.get(), rec.get(), &out_raw));
    else
      ok(sfp_attack_apply(model.get(), rec.get(), &out_raw));
    ModelPtr out(out_raw);
    ok(sfp_model_save(out.get(), o.out.c_str()));
    Json doc{{"kind", invert ? "attack-invert" : "attack-apply"},
             {"input", sfp_model_id(model.get())},
             {"output", sfp_model_id(out.get())},
             {"out", o.out}};
    std::cout << doc.dump(2) << "\n";
  };
  add_replay("apply", "replay a recorded attack")->callback([run_replay] {
    run_replay(false);
  });
  add_replay("invert", "undo a recorded attack")->callback([run_replay] {
    run_replay(true);
  });

  auto ft = atk->add_subcommand(
      "finetune", "gradient pursuit of a smaller attack-loss on the "
                  "fingerprinted layers");
  ft->fallthrough();
  struct FtOpts {
    std::string model, target_fp, out, trajectory;
    int steps = 50, probes = 2, probe_rows = 6;
    double lr = 5e-3, l_attack = 0.1, l_data = 1.0;
    bool no_data_loss = false;
    std::uint64_t seed = 0;
  };
  auto ft_opts = std::make_shared<FtOpts>();
  ft->add_option("--model", ft_opts->model, "model bundle directory")
      ->required();
  ft->add_option("--target-fp", ft_opts->target_fp,
                 "fingerprint to move away from")
      ->required();
  ft->add_option("--out", ft_opts->out, "output bundle directory")->required();
  ft->add_option("--steps", ft_opts->steps, "gradient steps");
  ft->add_option("--lr", ft_opts->lr, "step size");
  ft->add_option("--l-attack", ft_opts->l_attack, "attack-loss weight");
  ft->add_option("--l-data", ft_opts->l_data, "output-preservation weight");
  ft->add_flag("--no-data-loss", ft_opts->no_data_loss,
               "drop the output-preservation term");
  ft->add_option("--probes", ft_opts->probes, "probe inputs for the data term");
  ft->add_option("--probe-rows", ft_opts->probe_rows, "rows per probe");
  ft->add_option("--seed", ft_opts->seed, "probe seed");
  ft->add_option("--trajectory", ft_opts->trajectory,
                 "write step,distance,attack_loss,data_loss CSV here");
  ft->callback([session, ft_opts] {
    const FtOpts& o = *ft_opts;
    session->echo(Json{{"command", "attack finetune"},
                       {"model", o.model},
                       {"target_fp", o.target_fp},
                       {"out", o.out},
                       {"steps", o.steps},
                       {"lr", o.lr},
                       {"l_attack", o.l_attack},
                       {"l_data", o.l_data},
                       {"use_data_loss", !o.no_data_loss},
                       {"probes", o.probes},
                       {"probe_rows", o.probe_rows},
                       {"seed", o.seed}});
    ModelPtr model = load_model_dir(o.model);
    FingerprintPtr target = load_fp_file(o.target_fp);
    sfp_model* out_raw = nullptr;
    char* traj = nullptr;
    ok(sfp_attack_finetune(model.get(), target.get(), o.steps, o.lr,
                           o.l_attack, o.l_data, o.no_data_loss ? 0 : 1,
                           o.probes, o.probe_rows, o.seed, &out_raw,
                           o.trajectory.empty() ? nullptr : &traj));
    ModelPtr out(out_raw);
    StringPtr traj_owner(traj);
    ok(sfp_model_save(out.get(), o.out.c_str()));
    if (traj != nullptr) write_text(o.trajectory, traj);
    Json doc{{"kind", "attack-finetune"},
             {"input", sfp_model_id(model.get())},
             {"output", sfp_model_id(out.get())},
             {"steps", o.steps},
             {"out", o.out}};
    std::cout << doc.dump(2) << "\n";
  });

  auto pr = atk->add_subcommand("prune",
                                "drop a shared slice of the model width");
  pr->fallthrough();
  struct PrOpts {
    std::string model, out;
    double ratio = 0.1;
    std::uint64_t seed = 0;
  };
  auto pr_opts = std::make_shared<PrOpts>();
  pr->add_option("--model", pr_opts->model, "model bundle directory")
      ->required();
  pr->add_option("--out", pr_opts->out, "output bundle directory")->required();
  pr->add_option("--ratio", pr_opts->ratio, "fraction of d_model to drop")
      ->required();
  pr->add_option("--seed", pr_opts->seed, "selection seed");
  pr->callback([session, pr_opts] {
    const PrOpts& o = *pr_opts;
    session->echo(Json{{"command", "attack prune"},
                       {"model", o.model},
                       {"out", o.out},
                       {"ratio", o.ratio},
                       {"seed", o.seed}});
    ModelPtr model = load_model_dir(o.model);
    sfp_model* out_raw = nullptr;
    ok(sfp_attack_prune(model.get(), o.ratio, o.seed, &out_raw));
    ModelPtr out(out_raw);
    ok(sfp_model_save(out.get(), o.out.c_str()));
    Json doc{{"kind", "attack-prune"},
             {"input", sfp_model_id(model.get())},
             {"output", sfp_model_id(out.get())},
             {"ratio", o.ratio},
             {"out", o.out}};
    std::cout << doc.dump(2) << "\n";
  });

  // ---- augment ----
  auto aug = app.add_subcommand("augment",
                                "similarity-preserving model variations");
  aug->require_subcommand(1);
  aug->fallthrough();
  struct AugOpts {
    std::string model, out;
    double alpha = 0.0, rate = 0.0;
    int count = 0, n_f = 4;
    std::uint64_t seed = 0;
  };
  auto aug_opts = std::make_shared<AugOpts>();
  auto aug_common = [&](CLI::App* sub) {
    sub->fallthrough();
    sub->add_option("--model", aug_opts->model, "model bundle directory")
        ->required();
    sub->add_option("--out", aug_opts->out, "output bundle directory")
        ->required();
    sub->add_option("--seed", aug_opts->seed, "augmentation seed");
  };
  auto aug_finish = [session, aug_opts](const char* kind, sfp_model* out_raw,
                                        const ModelPtr& in) {
    ModelPtr out(out_raw);
    ok(sfp_model_save(out.get(), aug_opts->out.c_str()));
    Json doc{{"kind", std::string("augment-") + kind},
             {"input", sfp_model_id(in.get())},
             {"output", sfp_model_id(out.get())},
             {"out", aug_opts->out}};
    std::cout << doc.dump(2) << "\n";
  };

  auto aug_noise = aug->add_subcommand(
      "noise", "additive Gaussian noise on the fingerprinted layers");
  aug_common(aug_noise);
  aug_noise->add_option("--alpha", aug_opts->alpha, "noise amplitude")
      ->required();
  aug_noise->add_option("--n-f", aug_opts->n_f, "layers touched");
  aug_noise->callback([session, aug_opts, aug_finish] {
    const AugOpts& o = *aug_opts;
    session->echo(Json{{"command", "augment noise"},
                       {"model", o.model},
                       {"out", o.out},
                       {"alpha", o.alpha},
                       {"n_f", o.n_f},
                       {"seed", o.seed}});
    ModelPtr model = load_model_dir(o.model);
    sfp_model* out_raw = nullptr;
    ok(sfp_augment_noise(model.get(), o.alpha, o.n_f, o.seed, &out_raw));
    aug_finish("noise", out_raw, model);
  });

  auto aug_delr = aug->add_subcommand("delete-rows",
                                      "drop model-width rows in every layer");
  aug_common(aug_delr);
  aug_delr->add_option("--count", aug_opts->count, "rows to drop")->required();
  aug_delr->callback([session, aug_opts, aug_finish] {
    const AugOpts& o = *aug_opts;
    session->echo(Json{{"command", "augment delete-rows"},
                       {"model", o.model},
                       {"out", o.out},
                       {"count", o.count},
                       {"seed", o.seed}});
    ModelPtr model = load_model_dir(o.model);
    sfp_model* out_raw = nullptr;
    ok(sfp_augment_delete_rows(model.get(), o.count, o.seed, &out_raw));
    aug_finish("delete-rows", out_raw, model);
  });

  auto aug_delc = aug->add_subcommand(
      "delete-cols", "drop attention-width columns in every layer");
  aug_common(aug_delc);
  aug_delc->add_option("--count", aug_opts->count, "columns to drop")
      ->required();
  aug_delc->callback([session, aug_opts, aug_finish] {
    const AugOpts& o = *aug_opts;
    session->echo(Json{{"command", "augment delete-cols"},
                       {"model", o.model},
                       {"out", o.out},
                       {"count", o.count},
                       {"seed", o.seed}});
    ModelPtr model = load_model_dir(o.model);
    sfp_model* out_raw = nullptr;
    ok(sfp_augment_delete_cols(model.get(), o.count, o.seed, &out_raw));
    aug_finish("delete-cols", out_raw, model);
  });

  auto aug_mask = aug->add_subcommand(
      "mask", "zero random entries in the fingerprinted layers");
  aug_common(aug_mask);
  aug_mask->add_option("--rate", aug_opts->rate, "masking probability")
      ->required();
  aug_mask->add_option("--n-f", aug_opts->n_f, "layers touched");
  aug_mask->callback([session, aug_opts, aug_finish] {
    const AugOpts& o = *aug_opts;
    session->echo(Json{{"command", "augment mask"},
                       {"model", o.model},
                       {"out", o.out},
                       {"rate", o.rate},
                       {"n_f", o.n_f},
                       {"seed", o.seed}});
    ModelPtr model = load_model_dir(o.model);
    sfp_model* out_raw = nullptr;
    ok(sfp_augment_mask(model.get(), o.rate, o.n_f, o.seed, &out_raw));
    aug_finish("mask", out_raw, model);
  });

  // ---- train ----
  auto tr = app.add_subcommand(
      "train", "build (or load) a labeled fingerprint corpus and train the "
               "similarity network");
  tr->fallthrough();
  tr->set_help_flag("--help", "print help and exit");
  struct TrOpts {
    std::string corpus, target, out, save_corpus, history, profile;
    std::vector<std::string> related, unrelated;
    std::vector<double> noise_alphas, mask_rates;
    std::vector<int> row_deletions, col_deletions;
    std::uint64_t corpus_seed = 0, train_seed = 42;
    int n_f = 4, h = 8;
    std::vector<int> widths;
    int epochs = 1000, lr_step = 100, batch_size = 0;
    double lr = 1e-4, weight_decay = 1e-6, lr_gamma = 0.8;
    double label_smoothing = 0.01, fgsm_eps = 1e-5;
  };
  auto tr_opts = std::make_shared<TrOpts>();
  tr->add_option("--corpus", tr_opts->corpus,
                 "load a saved corpus instead of building one");
  tr->add_option("--target", tr_opts->target, "target model bundle");
  tr->add_option("--related", tr_opts->related, "related model bundle")
      ->take_all();
  tr->add_option("--unrelated", tr_opts->unrelated, "unrelated model bundle")
      ->take_all();
  tr->add_option("--noise-alpha", tr_opts->noise_alphas,
                 "noise augmentation amplitude")
      ->take_all();
  tr->add_option("--delete-rows", tr_opts->row_deletions,
                 "row-deletion augmentation count")
      ->take_all();
  tr->add_option("--delete-cols", tr_opts->col_deletions,
                 "column-deletion augmentation count")
      ->take_all();
  tr->add_option("--mask-rate", tr_opts->mask_rates,
                 "masking augmentation rate")
      ->take_all();
  tr->add_option("--corpus-seed", tr_opts->corpus_seed, "augmentation seed");
  auto tr_nf = tr->add_option("--n-f", tr_opts->n_f, "layers fingerprinted");
  auto tr_h = tr->add_option("--h", tr_opts->h, "values kept per spectrum");
  auto tr_w = tr->add_option("--widths", tr_opts->widths,
                             "six stage widths for the network")
                  ->delimiter(',')
                  ->expected(6);
  tr->add_option("--profile", tr_opts->profile,
                 "toy or paper defaults for n-f, h, widths");
  tr->add_option("--epochs", tr_opts->epochs, "training epochs");
  tr->add_option("--lr", tr_opts->lr, "initial learning rate");
  tr->add_option("--weight-decay", tr_opts->weight_decay,
                 "decoupled weight decay");
  tr->add_option("--lr-step", tr_opts->lr_step, "epochs per decay step");
  tr->add_option("--lr-gamma", tr_opts->lr_gamma, "decay factor");
  tr->add_option("--label-smoothing", tr_opts->label_smoothing,
                 "label smoothing");
  tr->add_option("--fgsm-eps", tr_opts->fgsm_eps,
                 "adversarial input perturbation");
  tr->add_option("--batch-size", tr_opts->batch_size,
                 "items per step (0: whole corpus)");
  tr->add_option("--train-seed", tr_opts->train_seed, "training seed");
  tr->add_option("--out", tr_opts->out, "network checkpoint directory")
      ->required();
  tr->add_option("--save-corpus", tr_opts->save_corpus,
                 "also save the built corpus here");
  tr->add_option("--history", tr_opts->history,
                 "write per-epoch training stats CSV here");
  tr->callback([session, tr_opts, tr_nf, tr_h, tr_w] {
    TrOpts& o = *tr_opts;
    if (!o.profile.empty()) {
      ProfileDims dims = profile_dims(o.profile);
      if (tr_nf->count() == 0) o.n_f = dims.n_f;
      if (tr_h->count() == 0) o.h = dims.h;
      if (tr_w->count() == 0) o.widths = dims.widths;
    }
    session->echo(Json{{"command", "train"},
                       {"corpus", o.corpus},
                       {"target", o.target},
                       {"related", o.related},
                       {"unrelated", o.unrelated},
                       {"noise_alphas", o.noise_alphas},
                       {"row_deletions", o.row_deletions},
                       {"col_deletions", o.col_deletions},
                       {"mask_rates", o.mask_rates},
                       {"corpus_seed", o.corpus_seed},
                       {"n_f", o.n_f},
                       {"h", o.h},
                       {"widths", o.widths},
                       {"epochs", o.epochs},
                       {"lr", o.lr},
                       {"weight_decay", o.weight_decay},
                       {"lr_step", o.lr_step},
                       {"lr_gamma", o.lr_gamma},
                       {"label_smoothing", o.label_smoothing},
                       {"fgsm_eps", o.fgsm_eps},
                       {"batch_size", o.batch_size},
                       {"train_seed", o.train_seed},
                       {"out", o.out}});
    CorpusPtr corpus;
    if (!o.corpus.empty()) {
      if (!o.target.empty())
        throw std::runtime_error("--corpus and --target are exclusive");
      sfp_corpus* raw = nullptr;
      ok(sfp_corpus_load(o.corpus.c_str(), &raw));
      corpus.reset(raw);
    } else {
      if (o.target.empty())
        throw std::runtime_error("need --corpus or --target");
      ModelPtr target = load_model_dir(o.target);
      std::vector<ModelPtr> related = load_model_dirs(o.related);
      std::vector<ModelPtr> unrelated = load_model_dirs(o.unrelated);
      std::vector<const sfp_model*> rel = raw_handles(related);
      std::vector<const sfp_model*> unrel = raw_handles(unrelated);
      sfp_corpus* raw = nullptr;
      ok(sfp_corpus_build(
          target.get(), rel.empty() ? nullptr : rel.data(), int(rel.size()),
          unrel.empty() ? nullptr : unrel.data(), int(unrel.size()),
          o.noise_alphas.empty() ? nullptr : o.noise_alphas.data(),
          int(o.noise_alphas.size()),
          o.row_deletions.empty() ? nullptr : o.row_deletions.data(),
          int(o.row_deletions.size()),
          o.col_deletions.empty() ? nullptr : o.col_deletions.data(),
          int(o.col_deletions.size()),
          o.mask_rates.empty() ? nullptr : o.mask_rates.data(),
          int(o.mask_rates.size()), o.corpus_seed, o.n_f, o.h, &raw));
      corpus.reset(raw);
      if (!o.save_corpus.empty())
        ok(sfp_corpus_save(corpus.get(), o.save_corpus.c_str()));
    }
    int items = 0;
    ok(sfp_corpus_size(corpus.get(), &items));
    char* warn = nullptr;
    ok(sfp_corpus_warnings(corpus.get(), &warn));
    StringPtr warn_owner(warn);

    sfp_simnet* net_raw = nullptr;
    char* history = nullptr;
    ok(sfp_simnet_train(corpus.get(), o.n_f, o.h,
                        o.widths.empty() ? nullptr : o.widths.data(),
                        int(o.widths.size()), o.epochs, o.lr, o.weight_decay,
                        o.lr_step, o.lr_gamma, o.label_smoothing, o.fgsm_eps,
                        o.batch_size, o.train_seed, &net_raw,
                        o.history.empty() ? nullptr : &history));
    SimnetPtr net(net_raw);
    StringPtr history_owner(history);
    ok(sfp_simnet_save(net.get(), o.out.c_str()));
    if (history != nullptr) write_text(o.history, history);

    Json doc{{"kind", "train"},
             {"items", items},
             {"warnings", split_warnings(warn)},
             {"epochs", o.epochs},
             {"out", o.out}};
    std::cout << doc.dump(2) << "\n";
  });

  // ---- verify ----
  auto vf = app.add_subcommand(
      "verify", "score a suspect model or fingerprint against a target");
  vf->fallthrough();
  struct VfOpts {
    std::string net, target_fp, suspect, suspect_fp, out_json;
    double tau = 0.5;
  };
  auto vf_opts = std::make_shared<VfOpts>();
  vf->add_option("--net", vf_opts->net, "similarity network checkpoint")
      ->required();
  vf->add_option("--target-fp", vf_opts->target_fp, "target fingerprint file")
      ->required();
  vf->add_option("--suspect", vf_opts->suspect, "suspect model bundle");
  vf->add_option("--suspect-fp", vf_opts->suspect_fp,
                 "suspect fingerprint file");
  vf->add_option("--tau", vf_opts->tau, "relatedness threshold");
  vf->add_option("--out-json", vf_opts->out_json, "also write the report here");
  vf->callback([session, vf_opts] {
    const VfOpts& o = *vf_opts;
    session->echo(Json{{"command", "verify"},
                       {"net", o.net},
                       {"target_fp", o.target_fp},
                       {"suspect", o.suspect},
                       {"suspect_fp", o.suspect_fp},
                       {"tau", o.tau}});
    if (o.suspect.empty() == o.suspect_fp.empty())
      throw std::runtime_error("need exactly one of --suspect, --suspect-fp");
    sfp_simnet* net_raw = nullptr;
    ok(sfp_simnet_load(o.net.c_str(), &net_raw));
    SimnetPtr net(net_raw);
    FingerprintPtr target = load_fp_file(o.target_fp);
    FingerprintPtr suspect;
    if (!o.suspect_fp.empty()) {
      suspect = load_fp_file(o.suspect_fp);
    } else {
      int n_f = 0, h = 0;
      ok(sfp_simnet_info(net.get(), &n_f, &h, nullptr));
      ModelPtr model = load_model_dir(o.suspect);
      sfp_fingerprint* raw = nullptr;
      ok(sfp_fingerprint_extract(model.get(), n_f, h, 0, &raw));
      suspect.reset(raw);
    }
    double dist = 0.0, score = 0.0;
    ok(sfp_fingerprint_distance(target.get(), suspect.get(), &dist));
    ok(sfp_simnet_score(net.get(), suspect.get(), &score));
    char* doc = nullptr;
    ok(sfp_verify_report(sfp_fingerprint_model_id(target.get()),
                         sfp_fingerprint_model_id(suspect.get()), dist, score,
                         o.tau, session->timestamp ? 1 : 0, &doc));
    StringPtr owner(doc);
    std::cout << doc;
    if (!o.out_json.empty()) write_text(o.out_json, doc);
  });

  // ---- false-claim ----
  auto fc = app.add_subcommand(
      "false-claim", "search for a token sequence aligning two models' "
                     "first-layer similarity features");
  fc->fallthrough();
  struct FcOpts {
    std::string claimant, accused, out_json, history;
    int population = 32, generations = 100, length = 16, elites = 2;
    double mutation_rate = 0.05;
    std::uint64_t seed = 0;
  };
  auto fc_opts = std::make_shared<FcOpts>();
  fc->add_option("--claimant", fc_opts->claimant, "claimant model bundle")
      ->required();
  fc->add_option("--accused", fc_opts->accused, "accused model bundle")
      ->required();
  fc->add_option("--population", fc_opts->population, "population size");
  fc->add_option("--generations", fc_opts->generations, "generations");
  fc->add_option("--length", fc_opts->length, "tokens per candidate");
  fc->add_option("--mutation-rate", fc_opts->mutation_rate,
                 "per-gene mutation probability");
  fc->add_option("--elites", fc_opts->elites, "elites kept each generation");
  fc->add_option("--seed", fc_opts->seed, "search seed");
  fc->add_option("--out-json", fc_opts->out_json, "also write the report here");
  fc->add_option("--history", fc_opts->history,
                 "write generation,best_fitness CSV here");
  fc->callback([session, fc_opts] {
    const FcOpts& o = *fc_opts;
    session->echo(Json{{"command", "false-claim"},
                       {"claimant", o.claimant},
                       {"accused", o.accused},
                       {"population", o.population},
                       {"generations", o.generations},
                       {"length", o.length},
                       {"mutation_rate", o.mutation_rate},
                       {"elites", o.elites},
                       {"seed", o.seed}});
    ModelPtr claimant = load_model_dir(o.claimant);
    ModelPtr accused = load_model_dir(o.accused);
    char* doc = nullptr;
    char* history = nullptr;
    ok(sfp_false_claim(claimant.get(), accused.get(), o.population,
                       o.generations, o.length, o.mutation_rate, o.elites,
                       o.seed, &doc, o.history.empty() ? nullptr : &history));
    StringPtr doc_owner(doc), history_owner(history);
    std::cout << doc;
    if (!o.out_json.empty()) write_text(o.out_json, doc);
    if (history != nullptr) write_text(o.history, history);
  });

  // ---- ablate ----
  auto ab = app.add_subcommand(
      "ablate", "margin sweep over fingerprint design choices");
  ab->fallthrough();
  struct AbOpts {
    std::string target, out_json, out_csv;
    std::vector<std::string> related, unrelated;
    std::vector<std::string> windows{"first", "middle", "last"};
    std::vector<std::string> subsets{"both"};
    std::vector<std::string> kinds{"both"};
    std::vector<int> n_f_values{4};
    std::vector<int> h_values{2, 4, 8};
  };
  auto ab_opts = std::make_shared<AbOpts>();
  ab->add_option("--target", ab_opts->target, "target model bundle")
      ->required();
  ab->add_option("--related", ab_opts->related, "related model bundle")
      ->take_all();
  ab->add_option("--unrelated", ab_opts->unrelated, "unrelated model bundle")
      ->take_all();
  ab->add_option("--windows", ab_opts->windows,
                 "layer windows: first, middle, last")
      ->delimiter(',');
  ab->add_option("--subsets", ab_opts->subsets, "weight subsets: qk, vo, both")
      ->delimiter(',');
  ab->add_option("--kinds", ab_opts->kinds,
                 "value kinds: singular, eigen, both")
      ->delimiter(',');
  ab->add_option("--n-f-values", ab_opts->n_f_values, "window depths")
      ->delimiter(',');
  ab->add_option("--h-values", ab_opts->h_values, "values kept per spectrum")
      ->delimiter(',');
  ab->add_option("--out-json", ab_opts->out_json, "also write the report here");
  ab->add_option("--out-csv", ab_opts->out_csv, "write the table as CSV here");
  ab->callback([session, ab_opts] {
    const AbOpts& o = *ab_opts;
    session->echo(Json{{"command", "ablate"},
                       {"target", o.target},
                       {"related", o.related},
                       {"unrelated", o.unrelated},
                       {"windows", o.windows},
                       {"subsets", o.subsets},
                       {"kinds", o.kinds},
                       {"n_f_values", o.n_f_values},
                       {"h_values", o.h_values}});
    ModelPtr target = load_model_dir(o.target);
    std::vector<ModelPtr> related = load_model_dirs(o.related);
    std::vector<ModelPtr> unrelated = load_model_dirs(o.unrelated);
    std::vector<const sfp_model*> rel = raw_handles(related);
    std::vector<const sfp_model*> unrel = raw_handles(unrelated);

    const std::map<std::string, int> window_codes{
        {"first", 0}, {"middle", 1}, {"last", 2}};
    const std::map<std::string, int> subset_codes{
        {"qk", 0}, {"vo", 1}, {"both", 2}};
    const std::map<std::string, int> kind_codes{
        {"singular", 0}, {"eigen", 1}, {"both", 2}};
    std::vector<int> windows, subsets, kinds;
    for (const std::string& w : o.windows)
      windows.push_back(enum_code(w, "window", window_codes));
    for (const std::string& s : o.subsets)
      subsets.push_back(enum_code(s, "subset", subset_codes));
    for (const std::string& k : o.kinds)
      kinds.push_back(enum_code(k, "kind", kind_codes));

    char* doc = nullptr;
    char* csv = nullptr;
    ok(sfp_ablate(target.get(), rel.empty() ? nullptr : rel.data(),
                  int(rel.size()), unrel.empty() ? nullptr : unrel.data(),
                  int(unrel.size()), windows.data(), int(windows.size()),
                  subsets.data(), int(subsets.size()), kinds.data(),
                  int(kinds.size()), o.n_f_values.data(),
                  int(o.n_f_values.size()), o.h_values.data(),
                  int(o.h_values.size()), session->timestamp ? 1 : 0, &doc,
                  o.out_csv.empty() ? nullptr : &csv));
    StringPtr doc_owner(doc), csv_owner(csv);
    std::cout << doc;
    if (!o.out_json.empty()) write_text(o.out_json, doc);
    if (csv != nullptr) write_text(o.out_csv, csv);
  });

  std::function<void(CLI::App*)> long_help = [&](CLI::App* a) {
    a->set_help_flag("--help", "print help and exit");
    for (CLI::App* s : a->get_subcommands({})) long_help(s);
  };
  long_help(&app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "sfp: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
