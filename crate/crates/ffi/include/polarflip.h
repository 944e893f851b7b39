#ifndef POLARFLIP_H
#define POLARFLIP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum PfStatus {
  PF_STATUS_OK = 0,
  PF_STATUS_NULL_POINTER = 1,
  PF_STATUS_INVALID_ARGUMENT = 2,
  PF_STATUS_CODE = 3,
  PF_STATUS_DECODE = 4,
  PF_STATUS_FLIP = 5,
  PF_STATUS_WEIGHTS = 6,
  PF_STATUS_IO = 7,
  PF_STATUS_PANIC = 8,
} PfStatus;

/**
 * CRC choices for [`pf_code_new`].
 */
typedef enum PfCrc {
  PF_CRC_NONE = 0,
  PF_CRC_CRC8 = 1,
  PF_CRC_CRC16 = 2,
  PF_CRC_CRC24A = 3,
} PfCrc;

/**
 * Flip ranking strategies for [`pf_decoder_new`].
 */
typedef enum PfStrategy {
  PF_STRATEGY_PATH_CONFIDENCE = 0,
  PF_STRATEGY_EXACT_RATIO = 1,
  PF_STRATEGY_SIMPLIFIED = 2,
  PF_STRATEGY_LSTM = 3,
  PF_STRATEGY_GENIE = 4,
} PfStrategy;

/**
 * Polar code with its CRC.
 */
typedef struct PfCode PfCode;

/**
 * CA-SCL decoder with optional bit flipping.
 */
typedef struct PfDecoder PfDecoder;

/**
 * Recurrent ranker weights checked against a code and list size.
 */
typedef struct PfWeights PfWeights;

/**
 * Per-frame summary written by [`pf_decoder_decode`].
 */
typedef struct PfDecodeInfo {
  bool crc_ok;
  /**
   * Extra decoding attempts after the initial one.
   */
  uint32_t attempts_used;
  /**
   * 0 when the initial decode passed, t when flip t passed, -1 otherwise.
   */
  int32_t success_trial;
} PfDecodeInfo;

/**
 * Closed-form ranker cost per step.
 */
typedef struct PfOpCount {
  uint64_t adds;
  uint64_t mults;
  uint64_t memory;
} PfOpCount;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none.
 * Valid until the next failing call on the same thread.
 */
const char *pf_last_error(void);

/**
 * Library version, static string.
 */
const char *pf_version(void);

/**
 * Build a code by Gaussian-approximation construction. `crc` is a [`PfCrc`] value.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum PfStatus pf_code_new(size_t n_bits,
                          size_t k_info,
                          int32_t crc,
                          double design_snr_db,
                          struct PfCode **out);

/**
 * Load a code from a JSON description file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for writes.
 */
enum PfStatus pf_code_load(const char *path, struct PfCode **out);

/**
 * # Safety
 * `code` must come from this library and not be used afterwards. Null is ignored.
 */
void pf_code_free(struct PfCode *code);

/**
 * Block length N, or 0 for a null handle.
 *
 * # Safety
 * `code` must be null or a live handle.
 */
size_t pf_code_n_bits(const struct PfCode *code);

/**
 * Information length K, CRC included; 0 for a null handle.
 *
 * # Safety
 * `code` must be null or a live handle.
 */
size_t pf_code_k_info(const struct PfCode *code);

/**
 * Number of payload bits before the CRC is attached.
 *
 * # Safety
 * `code` must be null or a live handle.
 */
size_t pf_code_payload_len(const struct PfCode *code);

/**
 * Copy the 1-based information set (K entries) into `out`.
 *
 * # Safety
 * `out` must hold `len` elements.
 */
enum PfStatus pf_code_info_set(const struct PfCode *code, size_t *out, size_t len);

/**
 * Size of the critical set; 0 for a null handle.
 *
 * # Safety
 * `code` must be null or a live handle.
 */
size_t pf_code_critical_set_len(const struct PfCode *code);

/**
 * Attach the CRC to `payload_len` bits, writing K bits to `message`.
 *
 * # Safety
 * `payload` and `message` must hold `payload_len` and `message_len` bytes.
 */
enum PfStatus pf_code_crc_attach(const struct PfCode *code,
                                 const uint8_t *payload,
                                 size_t payload_len,
                                 uint8_t *message,
                                 size_t message_len);

/**
 * Encode K message bits (0/1 bytes) into N codeword bits.
 *
 * # Safety
 * `message` and `codeword` must hold `message_len` and `codeword_len` bytes.
 */
enum PfStatus pf_code_encode(const struct PfCode *code,
                             const uint8_t *message,
                             size_t message_len,
                             uint8_t *codeword,
                             size_t codeword_len);

/**
 * Load ranker weights and check them against `code` and `list_size`.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `code` a live handle, `out` valid for writes.
 */
enum PfStatus pf_weights_load(const char *path,
                              const struct PfCode *code,
                              size_t list_size,
                              struct PfWeights **out);

/**
 * # Safety
 * `weights` must come from this library and not be used afterwards. Null is ignored.
 */
void pf_weights_free(struct PfWeights *weights);

/**
 * Create a decoder. `strategy` is a [`PfStrategy`] value; `t_max` 0 gives
 * plain CA-SCL. `weights` may be null unless the strategy needs them; they
 * are copied.
 *
 * # Safety
 * `code` must be a live handle, `weights` null or live, `out` valid for writes.
 */
enum PfStatus pf_decoder_new(const struct PfCode *code,
                             size_t list_size,
                             size_t t_max,
                             int32_t strategy,
                             const struct PfWeights *weights,
                             struct PfDecoder **out);

/**
 * # Safety
 * `decoder` must come from this library and not be used afterwards. Null is ignored.
 */
void pf_decoder_free(struct PfDecoder *decoder);

/**
 * Decode N channel LLRs (positive favours 0) into K message bits.
 * `truth` holds the K transmitted bits for the genie strategy and may be
 * null otherwise. `info` may be null.
 *
 * # Safety
 * Buffers must hold their stated lengths; `truth` must hold K bytes if non-null.
 */
enum PfStatus pf_decoder_decode(struct PfDecoder *decoder,
                                const double *llrs,
                                size_t llr_len,
                                const uint8_t *truth,
                                uint8_t *message,
                                size_t message_len,
                                struct PfDecodeInfo *info);

/**
 * Closed-form per-step cost of the compact ranker (`with_domain_knowledge`)
 * or of an LLR-fed ranker.
 */
struct PfOpCount pf_count_ops(uint64_t hidden,
                              uint64_t buckets,
                              uint64_t list_size,
                              uint64_t k_info,
                              bool with_domain_knowledge);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POLARFLIP_H */
