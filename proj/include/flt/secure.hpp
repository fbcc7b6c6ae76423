#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flt/federation.hpp"
#include "flt/model.hpp"
#include "flt/paillier.hpp"

namespace flt {

// Signed fixed point: x -> round(x * 2^scale_bits), negatives wrapped into
// the upper half of Z_n.
struct FixedPointCodec {
  int scale_bits = 16;
  double clamp_range = 8.0;

  bool operator==(const FixedPointCodec&) const = default;

  double resolution() const;  // 2^-scale_bits
  std::int64_t quantize(double x) const;
  double dequantize(std::int64_t q) const;
  mpz_class encode(double x, const mpz_class& n) const;
  // Decodes a residue mod n, mapping the upper half to negatives.
  double decode(const mpz_class& residue, const mpz_class& n) const;
};

void validate(const FixedPointCodec& codec);

struct CipherParams {
  std::string layer_name;
  std::vector<mpz_class> ciphertexts;
  FixedPointCodec codec;
  std::uint32_t count = 1;  // accumulated addends
  std::uint64_t key_fingerprint = 0;
  Visibility visibility = Visibility::kCommon;
};

// Element-wise quantize and encrypt under the recipient's key. Throws
// EncodingError naming the first value outside the clamp range.
CipherParams sec_trans(const ParamView& params, const paillier::PublicKey& recipient,
                       const FixedPointCodec& codec, paillier::EncryptionRng& rng);

// Element-wise homomorphic sum; counts add up. Throws ProtocolError on mixed
// keys, layers, or codecs.
CipherParams hom_aggregate(std::span<const CipherParams> ciphers,
                           const paillier::PublicKey& key);

// Decrypts and divides by `count`, giving the mean of the addends.
ParamView decrypt_mean(const CipherParams& cipher, const paillier::KeyPair& keys);
// Decrypted sum without division.
std::vector<double> decrypt_sum(const CipherParams& cipher, const paillier::KeyPair& keys);

// Wire format, all integers big-endian:
//   "FLTC" u8 version=1
//   u32 name_len, name bytes
//   u8 visibility (0 common, 1 private)
//   i32 scale_bits, u64 clamp_range (IEEE-754 bits)
//   u32 count, u64 key_fingerprint
//   u32 n_values, then per value: u32 byte_len, magnitude bytes
void write_cipher(const CipherParams& cipher, std::ostream& out);
CipherParams read_cipher(std::istream& in);
std::string serialize_cipher(const CipherParams& cipher);
CipherParams deserialize_cipher(const std::string& bytes);

// Aggregates the selected layers of each upload under encryption. Instance
// is single-threaded; it keeps byte counters for the transfer-efficiency
// metric.
class SecureAggregator final : public Aggregator {
 public:
  SecureAggregator(paillier::KeyPair keys, FixedPointCodec codec, std::uint64_t seed);

  std::vector<ParamView> aggregate(std::span<const LayeredModel> uploads,
                                   std::span<const std::size_t> members,
                                   VisibilityFilter filter) override;

  const paillier::KeyPair& keys() const { return keys_; }
  std::uint64_t plaintext_bytes() const { return plaintext_bytes_; }
  std::uint64_t ciphertext_bytes() const { return ciphertext_bytes_; }

 private:
  paillier::KeyPair keys_;
  FixedPointCodec codec_;
  std::uint64_t seed_;
  std::uint64_t calls_ = 0;
  std::uint64_t plaintext_bytes_ = 0;
  std::uint64_t ciphertext_bytes_ = 0;
};

// key_bits / 4096, clamped to 1.
double encryption_strength(unsigned key_bits);
// plaintext bytes (8 per value) / ciphertext wire bytes.
double transfer_efficiency(std::uint64_t plaintext_bytes, std::uint64_t ciphertext_bytes);
// Sec = gamma * EncStr + (1 - gamma) * TransEff; inputs must lie in [0,1].
double security_metric(double enc_strength, double trans_efficiency, double gamma);

}  // namespace flt
