#include <stdio.h>
#include <string.h>

#include "polarflip.h"

#define CHECK(cond)                                                     \
  do {                                                                  \
    if (!(cond)) {                                                      \
      const char *e = pf_last_error();                                  \
      fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond, e ? e : ""); \
      return 1;                                                         \
    }                                                                   \
  } while (0)

int main(void) {
  PfCode *code = NULL;
  CHECK(pf_code_new(100, 50, PF_CRC_NONE, 2.0, &code) == PF_STATUS_CODE);
  CHECK(pf_last_error() != NULL && code == NULL);

  CHECK(pf_code_new(64, 32, PF_CRC_CRC8, 2.0, &code) == PF_STATUS_OK);
  size_t n = pf_code_n_bits(code), k = pf_code_k_info(code), p = pf_code_payload_len(code);
  CHECK(n == 64 && k == 32 && p == 24);

  unsigned char payload[24], message[32], codeword[64], decoded[32];
  double llrs[64];
  for (size_t i = 0; i < p; i++) payload[i] = (unsigned char)((i * 5 + 1) % 3 == 0);
  CHECK(pf_code_crc_attach(code, payload, p, message, k) == PF_STATUS_OK);
  CHECK(pf_code_encode(code, message, k, codeword, n) == PF_STATUS_OK);
  for (size_t i = 0; i < n; i++) llrs[i] = codeword[i] ? -4.0 : 4.0;
  llrs[3] = -llrs[3] * 0.25;

  PfDecoder *dec = NULL;
  CHECK(pf_decoder_new(code, 4, 4, PF_STRATEGY_SIMPLIFIED, NULL, &dec) == PF_STATUS_OK);
  PfDecodeInfo info;
  CHECK(pf_decoder_decode(dec, llrs, n, NULL, decoded, k, &info) == PF_STATUS_OK);
  CHECK(info.crc_ok && info.success_trial == 0);
  CHECK(memcmp(decoded, message, k) == 0);
  CHECK(pf_decoder_decode(dec, llrs, n - 1, NULL, decoded, k, &info) == PF_STATUS_INVALID_ARGUMENT);

  PfOpCount ops = pf_count_ops(100, 62, 8, 256, true);
  CHECK(ops.adds == 47100 && ops.mults == 46900 && ops.memory == 47200);

  pf_decoder_free(dec);
  pf_code_free(code);
  printf("client ok, version %s\n", pf_version());
  return 0;
}
