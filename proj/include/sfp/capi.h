#ifndef SFP_CAPI_H
#define SFP_CAPI_H

/* C interface to the fingerprinting toolkit.  Objects live behind opaque
 * handles; every function returns a status code and leaves a message for
 * sfp_last_error() on failure.  Strings handed out as char** are heap
 * allocations the caller releases with sfp_string_free(); const char*
 * results point into the handle and stay valid until it is freed. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define SFP_OK 0
#define SFP_ERR_INVALID 1  /* bad input: shapes, files, domains */
#define SFP_ERR_NULL 2     /* required pointer was NULL */
#define SFP_ERR_INTERNAL 3 /* unexpected failure */

const char* sfp_version(void);
/* Message from the last failing call on this thread ("" if none). */
const char* sfp_last_error(void);
void sfp_string_free(char* s);

typedef struct sfp_model sfp_model;
typedef struct sfp_fingerprint sfp_fingerprint;
typedef struct sfp_attack_record sfp_attack_record;
typedef struct sfp_corpus sfp_corpus;
typedef struct sfp_simnet sfp_simnet;

/* --- models ------------------------------------------------------------ */

int sfp_model_generate_toy(int d_model, int d, int n_heads, int n_kv_heads,
                           int n_layers, int vocab_size, double init_scale,
                           uint64_t seed, sfp_model** out);
int sfp_model_load(const char* dir, sfp_model** out);
int sfp_model_save(const sfp_model* model, const char* dir);
void sfp_model_free(sfp_model* model);
const char* sfp_model_id(const sfp_model* model);
/* Any out pointer may be NULL. */
int sfp_model_dims(const sfp_model* model, int* d_model, int* d, int* n_heads,
                   int* n_kv_heads, int* n_layers, int* vocab_size);
int sfp_model_derive_related(const sfp_model* model, double perturbation_scale,
                             uint64_t seed, sfp_model** out);
int sfp_model_broadcast(const sfp_model* model, sfp_model** out);

/* --- fingerprints ------------------------------------------------------ */

int sfp_fingerprint_extract(const sfp_model* model, int n_f, int h, int pad,
                            sfp_fingerprint** out);
int sfp_fingerprint_extract_window(const sfp_model* model, int start, int n_f,
                                   int h, int pad, sfp_fingerprint** out);
int sfp_fingerprint_load(const char* path, sfp_fingerprint** out);
int sfp_fingerprint_save(const sfp_fingerprint* fp, const char* path);
void sfp_fingerprint_free(sfp_fingerprint* fp);
const char* sfp_fingerprint_model_id(const sfp_fingerprint* fp);
int sfp_fingerprint_info(const sfp_fingerprint* fp, int* n_f, int* h);
/* Extraction warnings joined with newlines ("" if none). */
int sfp_fingerprint_warnings(const sfp_fingerprint* fp, char** out);
int sfp_fingerprint_distance(const sfp_fingerprint* a, const sfp_fingerprint* b,
                             double* out);

/* --- weight-space attacks ---------------------------------------------- */

/* out_record may be NULL when the record is not wanted. */
int sfp_attack_permutation(const sfp_model* model, uint64_t seed,
                           sfp_model** out, sfp_attack_record** out_record);
int sfp_attack_linear(const sfp_model* model, uint64_t seed, int per_layer,
                      sfp_model** out, sfp_attack_record** out_record);
int sfp_attack_combined(const sfp_model* model, uint64_t seed, sfp_model** out,
                        sfp_attack_record** out_record);
int sfp_attack_record_save(const sfp_attack_record* rec, const char* path);
int sfp_attack_record_load(const char* path, sfp_attack_record** out);
void sfp_attack_record_free(sfp_attack_record* rec);
int sfp_attack_apply(const sfp_model* model, const sfp_attack_record* rec,
                     sfp_model** out);
int sfp_attack_invert(const sfp_model* model, const sfp_attack_record* rec,
                      sfp_model** out);

/* Gradient pursuit of a smaller attack-loss; out_trajectory_csv (optional)
 * receives step,distance,attack_loss,data_loss lines. */
int sfp_attack_finetune(const sfp_model* model, const sfp_fingerprint* target,
                        int steps, double learning_rate, double l_attack,
                        double l_data, int use_data_loss, int probe_count,
                        int probe_rows, uint64_t seed, sfp_model** out,
                        char** out_trajectory_csv);
int sfp_attack_prune(const sfp_model* model, double ratio, uint64_t seed,
                     sfp_model** out);

/* --- augmentations and training corpora -------------------------------- */

int sfp_augment_noise(const sfp_model* model, double alpha, int n_f,
                      uint64_t seed, sfp_model** out);
int sfp_augment_delete_rows(const sfp_model* model, int n_rows, uint64_t seed,
                            sfp_model** out);
int sfp_augment_delete_cols(const sfp_model* model, int n_cols, uint64_t seed,
                            sfp_model** out);
int sfp_augment_mask(const sfp_model* model, double rate, int n_f,
                     uint64_t seed, sfp_model** out);

/* Array arguments may be NULL when their count is 0. */
int sfp_corpus_build(const sfp_model* target, const sfp_model* const* related,
                     int n_related, const sfp_model* const* unrelated,
                     int n_unrelated, const double* noise_alphas, int n_noise,
                     const int* row_deletions, int n_row_deletions,
                     const int* col_deletions, int n_col_deletions,
                     const double* mask_rates, int n_mask_rates, uint64_t seed,
                     int n_f, int h, sfp_corpus** out);
int sfp_corpus_save(const sfp_corpus* corpus, const char* dir);
int sfp_corpus_load(const char* dir, sfp_corpus** out);
void sfp_corpus_free(sfp_corpus* corpus);
int sfp_corpus_size(const sfp_corpus* corpus, int* out);
int sfp_corpus_warnings(const sfp_corpus* corpus, char** out);

/* --- similarity network ------------------------------------------------ */

/* widths: 6 stage widths, or n_widths 0 for the toy defaults.
 * out_history_csv (optional) receives epoch,lr,clean_loss,adv_loss,accuracy
 * lines. */
int sfp_simnet_train(const sfp_corpus* corpus, int n_f, int h,
                     const int* widths, int n_widths, int epochs,
                     double learning_rate, double weight_decay, int lr_step,
                     double lr_gamma, double label_smoothing,
                     double fgsm_epsilon, int batch_size, uint64_t seed,
                     sfp_simnet** out, char** out_history_csv);
int sfp_simnet_save(const sfp_simnet* net, const char* dir);
int sfp_simnet_load(const char* dir, sfp_simnet** out);
void sfp_simnet_free(sfp_simnet* net);
int sfp_simnet_info(const sfp_simnet* net, int* n_f, int* h,
                    int* epochs_trained);
int sfp_simnet_score(const sfp_simnet* net, const sfp_fingerprint* fp,
                     double* out);

/* --- false-claim search ------------------------------------------------ */

/* out_json: best token sequence and fitness; out_history_csv (optional):
 * generation,best_fitness lines. */
int sfp_false_claim(const sfp_model* claimant, const sfp_model* accused,
                    int population, int generations, int length,
                    double mutation_rate, int elites, uint64_t seed,
                    char** out_json, char** out_history_csv);

/* --- reports and the design-space sweep --------------------------------- */

int sfp_compare_report(const sfp_fingerprint* a, const sfp_fingerprint* b,
                       int with_timestamp, char** out_json);
int sfp_verify_report(const char* target_id, const char* suspect_id,
                      double fingerprint_distance, double score, double tau,
                      int with_timestamp, char** out_json);

/* windows/subsets/kinds: 0/1/2 = first/middle/last, qk/vo/both,
 * singular/eigen/both.  out_json or out_csv may be NULL. */
int sfp_ablate(const sfp_model* target, const sfp_model* const* related,
               int n_related, const sfp_model* const* unrelated,
               int n_unrelated, const int* windows, int n_windows,
               const int* subsets, int n_subsets, const int* kinds,
               int n_kinds, const int* n_f_values, int n_n_f,
               const int* h_values, int n_h, int with_timestamp,
               char** out_json, char** out_csv);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SFP_CAPI_H */
