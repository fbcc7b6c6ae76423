#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <memory>
#include <string>

namespace flt::paillier {

// Public key with generator g = n + 1.
class PublicKey {
 public:
  PublicKey() = default;
  explicit PublicKey(mpz_class n);

  const mpz_class& n() const { return n_; }
  const mpz_class& n_squared() const { return n2_; }
  unsigned key_bits() const;
  // FNV-1a over the big-endian bytes of n.
  std::uint64_t fingerprint() const { return fingerprint_; }

  // (1 + m n) r^n mod n^2. `m` must lie in [0, n).
  mpz_class encrypt(const mpz_class& m, gmp_randclass& rng) const;
  // Enc(a) * Enc(b) = Enc(a + b).
  mpz_class add(const mpz_class& c1, const mpz_class& c2) const;
  mpz_class encrypt_zero_deterministic() const { return mpz_class(1); }

  bool operator==(const PublicKey& other) const { return n_ == other.n_; }

 private:
  mpz_class n_;
  mpz_class n2_;
  std::uint64_t fingerprint_ = 0;
};

class SecretKey {
 public:
  SecretKey() = default;
  SecretKey(const PublicKey& pub, mpz_class p, mpz_class q);

  // L(c^lambda mod n^2) * mu mod n.
  mpz_class decrypt(const mpz_class& c) const;

  const mpz_class& p() const { return p_; }
  const mpz_class& q() const { return q_; }

 private:
  PublicKey pub_;
  mpz_class p_, q_, lambda_, mu_;
};

struct KeyPair {
  PublicKey public_key;
  SecretKey secret_key;
  unsigned key_bits = 0;
};

// Deterministic under `seed`. Throws ConfigError if key_bits < 512.
KeyPair keygen(unsigned key_bits, std::uint64_t seed);

// Randomness source for encryption, seeded for replayable runs.
class EncryptionRng {
 public:
  explicit EncryptionRng(std::uint64_t seed);
  gmp_randclass& state() { return state_; }

 private:
  gmp_randclass state_;
};

// Hex (de)serialization for key files.
std::string to_hex(const mpz_class& v);
mpz_class from_hex(const std::string& s);

}  // namespace flt::paillier
