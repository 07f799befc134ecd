#include "sfp/capi.h"

#include <cstdlib>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "sfp/adversary.hpp"
#include "sfp/augment.hpp"
#include "sfp/fingerprint.hpp"
#include "sfp/model.hpp"
#include "sfp/report.hpp"
#include "sfp/simnet.hpp"
#include "sfp/transforms.hpp"

struct sfp_model {
  sfp::ModelWeights m;
};
struct sfp_fingerprint {
  sfp::Fingerprint fp;
};
struct sfp_attack_record {
  sfp::AttackRecord rec;
};
struct sfp_corpus {
  sfp::TrainingSet set;
};
struct sfp_simnet {
  sfp::SimNetParams net;
};

namespace {

thread_local std::string g_last_error;

int fail_with(int code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

// Runs the body under the exception-to-status contract of the C surface.
template <typename F>
int guarded(F&& body) {
  try {
    int rc = body();
    if (rc == SFP_OK) g_last_error.clear();
    return rc;
  } catch (const sfp::Error& e) {
    return fail_with(SFP_ERR_INVALID, e.what());
  } catch (const std::exception& e) {
    return fail_with(SFP_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail_with(SFP_ERR_INTERNAL, "unknown failure");
  }
}

bool missing(const void* p) { return p == nullptr; }

int null_arg(const char* what) {
  return fail_with(SFP_ERR_NULL, std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out != nullptr) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string joined(const std::vector<std::string>& lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i > 0) out += '\n';
    out += lines[i];
  }
  return out;
}

std::vector<sfp::ModelWeights> collect(const sfp_model* const* models,
                                       int count, const char* what) {
  sfp::check(count >= 0, std::string(what) + " count must be nonnegative");
  sfp::check(count == 0 || models != nullptr,
             std::string(what) + " array is NULL with a nonzero count");
  std::vector<sfp::ModelWeights> out;
  for (int i = 0; i < count; ++i) {
    sfp::check(models[i] != nullptr,
               std::string(what) + "[" + std::to_string(i) + "] is NULL");
    out.push_back(models[i]->m);
  }
  return out;
}

int give_model(sfp::ModelWeights m, sfp_model** out) {
  *out = new sfp_model{std::move(m)};
  return SFP_OK;
}

}  // namespace

extern "C" {

const char* sfp_version(void) { return "0.1.0"; }

const char* sfp_last_error(void) { return g_last_error.c_str(); }

void sfp_string_free(char* s) { std::free(s); }

/* --- models ------------------------------------------------------------ */

int sfp_model_generate_toy(int d_model, int d, int n_heads, int n_kv_heads,
                           int n_layers, int vocab_size, double init_scale,
                           uint64_t seed, sfp_model** out) {
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    sfp::ToyModelConfig cfg;
    cfg.d_model = d_model;
    cfg.d = d;
    cfg.n_heads = n_heads;
    cfg.n_kv_heads = n_kv_heads;
    cfg.n_layers = n_layers;
    cfg.vocab_size = vocab_size;
    cfg.init_scale = init_scale;
    return give_model(sfp::generate_toy_model(cfg, seed), out);
  });
}

int sfp_model_load(const char* dir, sfp_model** out) {
  if (missing(dir)) return null_arg("dir");
  if (missing(out)) return null_arg("out");
  return guarded([&] { return give_model(sfp::load_model(dir), out); });
}

int sfp_model_save(const sfp_model* model, const char* dir) {
  if (missing(model)) return null_arg("model");
  if (missing(dir)) return null_arg("dir");
  return guarded([&] {
    sfp::save_model(model->m, dir);
    return SFP_OK;
  });
}

void sfp_model_free(sfp_model* model) { delete model; }

const char* sfp_model_id(const sfp_model* model) {
  return model == nullptr ? "" : model->m.model_id.c_str();
}

int sfp_model_dims(const sfp_model* model, int* d_model, int* d, int* n_heads,
                   int* n_kv_heads, int* n_layers, int* vocab_size) {
  if (missing(model)) return null_arg("model");
  if (d_model != nullptr) *d_model = model->m.d_model;
  if (d != nullptr) *d = model->m.d;
  if (n_heads != nullptr) *n_heads = model->m.n_heads;
  if (n_kv_heads != nullptr) *n_kv_heads = model->m.n_kv_heads;
  if (n_layers != nullptr) *n_layers = model->m.n_layers;
  if (vocab_size != nullptr) *vocab_size = model->m.vocab_size;
  g_last_error.clear();
  return SFP_OK;
}

int sfp_model_derive_related(const sfp_model* model, double perturbation_scale,
                             uint64_t seed, sfp_model** out) {
  if (missing(model)) return null_arg("model");
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    return give_model(
        sfp::derive_related_model(model->m, perturbation_scale, seed), out);
  });
}

int sfp_model_broadcast(const sfp_model* model, sfp_model** out) {
  if (missing(model)) return null_arg("model");
  if (missing(out)) return null_arg("out");
  return guarded([&] { return give_model(sfp::broadcast_gqa(model->m), out); });
}

/* --- fingerprints ------------------------------------------------------ */

int sfp_fingerprint_extract(const sfp_model* model, int n_f, int h, int pad,
                            sfp_fingerprint** out) {
  if (missing(model)) return null_arg("model");
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    *out = new sfp_fingerprint{
        sfp::extract_fingerprint(model->m, n_f, h, pad != 0)};
    return SFP_OK;
  });
}

int sfp_fingerprint_extract_window(const sfp_model* model, int start, int n_f,
                                   int h, int pad, sfp_fingerprint** out) {
  if (missing(model)) return null_arg("model");
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    *out = new sfp_fingerprint{
        sfp::extract_fingerprint_window(model->m, start, n_f, h, pad != 0)};
    return SFP_OK;
  });
}

int sfp_fingerprint_load(const char* path, sfp_fingerprint** out) {
  if (missing(path)) return null_arg("path");
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    *out = new sfp_fingerprint{sfp::load_fingerprint(path)};
    return SFP_OK;
  });
}

int sfp_fingerprint_save(const sfp_fingerprint* fp, const char* path) {
  if (missing(fp)) return null_arg("fp");
  if (missing(path)) return null_arg("path");
  return guarded([&] {
    sfp::save_fingerprint(fp->fp, path);
    return SFP_OK;
  });
}

void sfp_fingerprint_free(sfp_fingerprint* fp) { delete fp; }

const char* sfp_fingerprint_model_id(const sfp_fingerprint* fp) {
  return fp == nullptr ? "" : fp->fp.model_id.c_str();
}

int sfp_fingerprint_info(const sfp_fingerprint* fp, int* n_f, int* h) {
  if (missing(fp)) return null_arg("fp");
  if (n_f != nullptr) *n_f = fp->fp.n_f;
  if (h != nullptr) *h = fp->fp.top_k;
  g_last_error.clear();
  return SFP_OK;
}

int sfp_fingerprint_warnings(const sfp_fingerprint* fp, char** out) {
  if (missing(fp)) return null_arg("fp");
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    *out = dup_string(joined(fp->fp.warnings));
    return *out != nullptr ? SFP_OK
                           : fail_with(SFP_ERR_INTERNAL, "out of memory");
  });
}

int sfp_fingerprint_distance(const sfp_fingerprint* a, const sfp_fingerprint* b,
                             double* out) {
  if (missing(a)) return null_arg("a");
  if (missing(b)) return null_arg("b");
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    *out = sfp::fingerprint_distance(a->fp, b->fp);
    return SFP_OK;
  });
}

/* --- weight-space attacks ---------------------------------------------- */

namespace {

int give_attack(std::pair<sfp::ModelWeights, sfp::AttackRecord> result,
                sfp_model** out, sfp_attack_record** out_record) {
  *out = new sfp_model{std::move(result.first)};
  if (out_record != nullptr)
    *out_record = new sfp_attack_record{std::move(result.second)};
  return SFP_OK;
}

}  // namespace

int sfp_attack_permutation(const sfp_model* model, uint64_t seed,
                           sfp_model** out, sfp_attack_record** out_record) {
  if (missing(model)) return null_arg("model");
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    return give_attack(sfp::permutation_attack(model->m, seed), out,
                       out_record);
  });
}

int sfp_attack_linear(const sfp_model* model, uint64_t seed, int per_layer,
                      sfp_model** out, sfp_attack_record** out_record) {
  if (missing(model)) return null_arg("model");
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    return give_attack(
        sfp::linear_mapping_attack(model->m, seed, per_layer != 0), out,
        out_record);
  });
}

int sfp_attack_combined(const sfp_model* model, uint64_t seed, sfp_model** out,
                        sfp_attack_record** out_record) {
  if (missing(model)) return null_arg("model");
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    return give_attack(sfp::combined_attack(model->m, seed), out, out_record);
  });
}

int sfp_attack_record_save(const sfp_attack_record* rec, const char* path) {
  if (missing(rec)) return null_arg("rec");
  if (missing(path)) return null_arg("path");
  return guarded([&] {
    sfp::save_attack_record(rec->rec, path);
    return SFP_OK;
  });
}

int sfp_attack_record_load(const char* path, sfp_attack_record** out) {
  if (missing(path)) return null_arg("path");
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    *out = new sfp_attack_record{sfp::load_attack_record(path)};
    return SFP_OK;
  });
}

void sfp_attack_record_free(sfp_attack_record* rec) { delete rec; }

int sfp_attack_apply(const sfp_model* model, const sfp_attack_record* rec,
                     sfp_model** out) {
  if (missing(model)) return null_arg("model");
  if (missing(rec)) return null_arg("rec");
  if (missing(out)) return null_arg("out");
  return guarded(
      [&] { return give_model(sfp::apply_attack(model->m, rec->rec), out); });
}

int sfp_attack_invert(const sfp_model* model, const sfp_attack_record* rec,
                      sfp_model** out) {
  if (missing(model)) return null_arg("model");
  if (missing(rec)) return null_arg("rec");
  if (missing(out)) return null_arg("out");
  return guarded(
      [&] { return give_model(sfp::invert_attack(model->m, rec->rec), out); });
}

int sfp_attack_finetune(const sfp_model* model, const sfp_fingerprint* target,
                        int steps, double learning_rate, double l_attack,
                        double l_data, int use_data_loss, int probe_count,
                        int probe_rows, uint64_t seed, sfp_model** out,
                        char** out_trajectory_csv) {
  if (missing(model)) return null_arg("model");
  if (missing(target)) return null_arg("target");
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    sfp::FinetuneConfig cfg;
    cfg.steps = steps;
    cfg.learning_rate = learning_rate;
    cfg.l_attack = l_attack;
    cfg.l_data = l_data;
    cfg.use_data_loss = use_data_loss != 0;
    cfg.probe_count = probe_count;
    cfg.probe_rows = probe_rows;
    cfg.seed = seed;
    sfp::FinetuneResult result = sfp::finetune_attack(model->m, target->fp, cfg);
    if (out_trajectory_csv != nullptr)
      *out_trajectory_csv = dup_string(sfp::trajectory_csv(result.trajectory));
    return give_model(std::move(result.model), out);
  });
}

int sfp_attack_prune(const sfp_model* model, double ratio, uint64_t seed,
                     sfp_model** out) {
  if (missing(model)) return null_arg("model");
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    return give_model(sfp::structured_prune(model->m, ratio, seed), out);
  });
}

/* --- augmentations and training corpora -------------------------------- */

int sfp_augment_noise(const sfp_model* model, double alpha, int n_f,
                      uint64_t seed, sfp_model** out) {
  if (missing(model)) return null_arg("model");
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    return give_model(sfp::gaussian_noise(model->m, alpha, n_f, seed), out);
  });
}

int sfp_augment_delete_rows(const sfp_model* model, int n_rows, uint64_t seed,
                            sfp_model** out) {
  if (missing(model)) return null_arg("model");
  if (missing(out)) return null_arg("out");
  return guarded(
      [&] { return give_model(sfp::delete_rows(model->m, n_rows, seed), out); });
}

int sfp_augment_delete_cols(const sfp_model* model, int n_cols, uint64_t seed,
                            sfp_model** out) {
  if (missing(model)) return null_arg("model");
  if (missing(out)) return null_arg("out");
  return guarded(
      [&] { return give_model(sfp::delete_cols(model->m, n_cols, seed), out); });
}

int sfp_augment_mask(const sfp_model* model, double rate, int n_f,
                     uint64_t seed, sfp_model** out) {
  if (missing(model)) return null_arg("model");
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    return give_model(sfp::random_mask(model->m, rate, n_f, seed), out);
  });
}

int sfp_corpus_build(const sfp_model* target, const sfp_model* const* related,
                     int n_related, const sfp_model* const* unrelated,
                     int n_unrelated, const double* noise_alphas, int n_noise,
                     const int* row_deletions, int n_row_deletions,
                     const int* col_deletions, int n_col_deletions,
                     const double* mask_rates, int n_mask_rates, uint64_t seed,
                     int n_f, int h, sfp_corpus** out) {
  if (missing(target)) return null_arg("target");
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    std::vector<sfp::ModelWeights> rel = collect(related, n_related, "related");
    std::vector<sfp::ModelWeights> unrel =
        collect(unrelated, n_unrelated, "unrelated");
    sfp::AugmentPlan plan;
    plan.seed = seed;
    auto take = [](auto* ptr, int count, auto& into, const char* what) {
      sfp::check(count >= 0, std::string(what) + " count must be nonnegative");
      sfp::check(count == 0 || ptr != nullptr,
                 std::string(what) + " array is NULL with a nonzero count");
      for (int i = 0; i < count; ++i) into.push_back(ptr[i]);
    };
    take(noise_alphas, n_noise, plan.noise_alphas, "noise_alphas");
    take(row_deletions, n_row_deletions, plan.row_deletions, "row_deletions");
    take(col_deletions, n_col_deletions, plan.col_deletions, "col_deletions");
    take(mask_rates, n_mask_rates, plan.mask_rates, "mask_rates");
    *out = new sfp_corpus{
        sfp::build_training_set(target->m, rel, unrel, plan, n_f, h)};
    return SFP_OK;
  });
}

int sfp_corpus_save(const sfp_corpus* corpus, const char* dir) {
  if (missing(corpus)) return null_arg("corpus");
  if (missing(dir)) return null_arg("dir");
  return guarded([&] {
    sfp::save_corpus(corpus->set, dir);
    return SFP_OK;
  });
}

int sfp_corpus_load(const char* dir, sfp_corpus** out) {
  if (missing(dir)) return null_arg("dir");
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    *out = new sfp_corpus{sfp::load_corpus(dir)};
    return SFP_OK;
  });
}

void sfp_corpus_free(sfp_corpus* corpus) { delete corpus; }

int sfp_corpus_size(const sfp_corpus* corpus, int* out) {
  if (missing(corpus)) return null_arg("corpus");
  if (missing(out)) return null_arg("out");
  *out = static_cast<int>(corpus->set.items.size());
  g_last_error.clear();
  return SFP_OK;
}

int sfp_corpus_warnings(const sfp_corpus* corpus, char** out) {
  if (missing(corpus)) return null_arg("corpus");
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    *out = dup_string(joined(corpus->set.warnings));
    return *out != nullptr ? SFP_OK
                           : fail_with(SFP_ERR_INTERNAL, "out of memory");
  });
}

/* --- similarity network ------------------------------------------------ */

int sfp_simnet_train(const sfp_corpus* corpus, int n_f, int h,
                     const int* widths, int n_widths, int epochs,
                     double learning_rate, double weight_decay, int lr_step,
                     double lr_gamma, double label_smoothing,
                     double fgsm_epsilon, int batch_size, uint64_t seed,
                     sfp_simnet** out, char** out_history_csv) {
  if (missing(corpus)) return null_arg("corpus");
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    std::vector<int> w;
    if (n_widths == 0) {
      w = sfp::toy_widths();
    } else {
      sfp::check(widths != nullptr, "widths array is NULL with a nonzero count");
      w.assign(widths, widths + n_widths);
    }
    sfp::TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.learning_rate = learning_rate;
    cfg.weight_decay = weight_decay;
    cfg.lr_step = lr_step;
    cfg.lr_gamma = lr_gamma;
    cfg.label_smoothing = label_smoothing;
    cfg.fgsm_epsilon = fgsm_epsilon;
    cfg.batch_size = batch_size;
    cfg.seed = seed;
    sfp::TrainResult result = sfp::simnet_train(corpus->set, n_f, h, w, cfg);
    if (out_history_csv != nullptr) {
      std::string csv = "epoch,lr,clean_loss,adv_loss,accuracy\n";
      for (const sfp::EpochStats& e : result.history)
        csv += std::to_string(e.epoch) + ',' + std::to_string(e.lr) + ',' +
               std::to_string(e.clean_loss) + ',' + std::to_string(e.adv_loss) +
               ',' + std::to_string(e.accuracy) + '\n';
      *out_history_csv = dup_string(csv);
    }
    *out = new sfp_simnet{std::move(result.params)};
    return SFP_OK;
  });
}

int sfp_simnet_save(const sfp_simnet* net, const char* dir) {
  if (missing(net)) return null_arg("net");
  if (missing(dir)) return null_arg("dir");
  return guarded([&] {
    sfp::save_simnet(net->net, dir);
    return SFP_OK;
  });
}

int sfp_simnet_load(const char* dir, sfp_simnet** out) {
  if (missing(dir)) return null_arg("dir");
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    *out = new sfp_simnet{sfp::load_simnet(dir)};
    return SFP_OK;
  });
}

void sfp_simnet_free(sfp_simnet* net) { delete net; }

int sfp_simnet_info(const sfp_simnet* net, int* n_f, int* h,
                    int* epochs_trained) {
  if (missing(net)) return null_arg("net");
  if (n_f != nullptr) *n_f = net->net.n_f;
  if (h != nullptr) *h = net->net.h;
  if (epochs_trained != nullptr) *epochs_trained = net->net.epochs_trained;
  g_last_error.clear();
  return SFP_OK;
}

int sfp_simnet_score(const sfp_simnet* net, const sfp_fingerprint* fp,
                     double* out) {
  if (missing(net)) return null_arg("net");
  if (missing(fp)) return null_arg("fp");
  if (missing(out)) return null_arg("out");
  return guarded([&] {
    *out = sfp::simnet_score(net->net, fp->fp);
    return SFP_OK;
  });
}

/* --- false-claim search ------------------------------------------------ */

int sfp_false_claim(const sfp_model* claimant, const sfp_model* accused,
                    int population, int generations, int length,
                    double mutation_rate, int elites, uint64_t seed,
                    char** out_json, char** out_history_csv) {
  if (missing(claimant)) return null_arg("claimant");
  if (missing(accused)) return null_arg("accused");
  if (missing(out_json)) return null_arg("out_json");
  return guarded([&] {
    sfp::GaConfig cfg;
    cfg.population = population;
    cfg.generations = generations;
    cfg.length = length;
    cfg.mutation_rate = mutation_rate;
    cfg.elites = elites;
    cfg.seed = seed;
    sfp::GaResult result = sfp::false_claim_ga(claimant->m, accused->m, cfg);
    sfp::Json doc;
    doc["kind"] = "false_claim";
    doc["claimant"] = claimant->m.model_id;
    doc["accused"] = accused->m.model_id;
    doc["best_fitness"] = result.best_fitness;
    doc["initial_fitness"] = result.history.front();
    doc["generations"] = generations;
    doc["best_tokens"] = result.best_tokens;
    *out_json = dup_string(doc.dump(2) + "\n");
    if (out_history_csv != nullptr)
      *out_history_csv = dup_string(sfp::ga_history_csv(result.history));
    return SFP_OK;
  });
}

/* --- reports and the design-space sweep --------------------------------- */

int sfp_compare_report(const sfp_fingerprint* a, const sfp_fingerprint* b,
                       int with_timestamp, char** out_json) {
  if (missing(a)) return null_arg("a");
  if (missing(b)) return null_arg("b");
  if (missing(out_json)) return null_arg("out_json");
  return guarded([&] {
    sfp::Json doc =
        sfp::stamp(sfp::compare_report(a->fp, b->fp), with_timestamp != 0);
    *out_json = dup_string(doc.dump(2) + "\n");
    return SFP_OK;
  });
}

int sfp_verify_report(const char* target_id, const char* suspect_id,
                      double fingerprint_distance, double score, double tau,
                      int with_timestamp, char** out_json) {
  if (missing(target_id)) return null_arg("target_id");
  if (missing(suspect_id)) return null_arg("suspect_id");
  if (missing(out_json)) return null_arg("out_json");
  return guarded([&] {
    sfp::Json doc = sfp::stamp(
        sfp::verify_report(target_id, suspect_id, fingerprint_distance, score,
                           tau),
        with_timestamp != 0);
    *out_json = dup_string(doc.dump(2) + "\n");
    return SFP_OK;
  });
}

int sfp_ablate(const sfp_model* target, const sfp_model* const* related,
               int n_related, const sfp_model* const* unrelated,
               int n_unrelated, const int* windows, int n_windows,
               const int* subsets, int n_subsets, const int* kinds,
               int n_kinds, const int* n_f_values, int n_n_f,
               const int* h_values, int n_h, int with_timestamp,
               char** out_json, char** out_csv) {
  if (missing(target)) return null_arg("target");
  return guarded([&] {
    sfp::ModelFamily family;
    family.target = target->m;
    family.related = collect(related, n_related, "related");
    family.unrelated = collect(unrelated, n_unrelated, "unrelated");

    sfp::AblationGrid grid;
    auto take_enum = [](const int* ptr, int count, auto& into, const char* what,
                        auto decode) {
      sfp::check(count >= 0, std::string(what) + " count must be nonnegative");
      sfp::check(count == 0 || ptr != nullptr,
                 std::string(what) + " array is NULL with a nonzero count");
      for (int i = 0; i < count; ++i) {
        sfp::check(ptr[i] >= 0 && ptr[i] <= 2,
                   std::string(what) + " codes must be 0, 1, or 2");
        into.push_back(decode(ptr[i]));
      }
    };
    take_enum(windows, n_windows, grid.windows, "windows", [](int v) {
      return static_cast<sfp::LayerWindow>(v);
    });
    take_enum(subsets, n_subsets, grid.subsets, "subsets", [](int v) {
      return static_cast<sfp::WeightSubset>(v);
    });
    take_enum(kinds, n_kinds, grid.kinds, "kinds", [](int v) {
      return static_cast<sfp::ValueKind>(v);
    });
    sfp::check(n_n_f >= 0 && (n_n_f == 0 || n_f_values != nullptr),
               "n_f_values array is NULL with a nonzero count");
    for (int i = 0; i < n_n_f; ++i) grid.n_f_values.push_back(n_f_values[i]);
    sfp::check(n_h >= 0 && (n_h == 0 || h_values != nullptr),
               "h_values array is NULL with a nonzero count");
    for (int i = 0; i < n_h; ++i) grid.h_values.push_back(h_values[i]);

    std::vector<sfp::AblationResult> rows = sfp::ablation_sweep(family, grid);
    if (out_json != nullptr) {
      sfp::Json doc =
          sfp::stamp(sfp::ablation_report(rows), with_timestamp != 0);
      *out_json = dup_string(doc.dump(2) + "\n");
    }
    if (out_csv != nullptr) *out_csv = dup_string(sfp::ablation_csv(rows));
    return SFP_OK;
  });
}

} /* extern "C" */
