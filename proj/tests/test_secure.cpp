#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "flt/error.hpp"
#include "flt/secure.hpp"
#include "oracles.hpp"

using namespace flt;

namespace {

const paillier::KeyPair& keys() {
  static const paillier::KeyPair k = paillier::keygen(512, 42);
  return k;
}

mpz_class random_below(std::mt19937_64& rng, const mpz_class& n) {
  mpz_class v = 0;
  for (int i = 0; i < 9; ++i) v = (v << 64) + mpz_class(std::to_string(rng()));
  return v % n;
}

}  // namespace

TEST_SUITE("paillier") {
  TEST_CASE("keygen: size, determinism, small keys rejected") {
    CHECK(keys().key_bits == 512);
    CHECK(mpz_sizeinbase(keys().public_key.n().get_mpz_t(), 2) == 512);
    CHECK(paillier::keygen(512, 42).public_key == keys().public_key);
    CHECK_FALSE(paillier::keygen(512, 43).public_key == keys().public_key);
    CHECK_THROWS_AS(paillier::keygen(256, 1), ConfigError);
  }

  TEST_CASE("round trip: zero, random plaintexts, fresh randomness") {
    const auto& pk = keys().public_key;
    paillier::EncryptionRng rng(5);
    CHECK(keys().secret_key.decrypt(pk.encrypt(0, rng.state())) == 0);
    std::mt19937_64 gen(9);
    for (int i = 0; i < 1000; ++i) {
      const mpz_class m = random_below(gen, pk.n());
      CHECK(keys().secret_key.decrypt(pk.encrypt(m, rng.state())) == m);
    }
    const mpz_class m = 123456789;
    const auto c1 = pk.encrypt(m, rng.state());
    const auto c2 = pk.encrypt(m, rng.state());
    CHECK(c1 != c2);
    CHECK(keys().secret_key.decrypt(c1) == keys().secret_key.decrypt(c2));
  }

  TEST_CASE("homomorphism on random integer pairs") {
    const auto& pk = keys().public_key;
    paillier::EncryptionRng rng(6);
    CHECK(keys().secret_key.decrypt(pk.add(pk.encrypt(2, rng.state()), pk.encrypt(3, rng.state()))) == 5);
    std::mt19937_64 gen(10);
    const mpz_class half = pk.n() / 2;
    for (int i = 0; i < 1000; ++i) {
      const mpz_class a = random_below(gen, half), b = random_below(gen, half);
      CHECK(keys().secret_key.decrypt(pk.add(pk.encrypt(a, rng.state()), pk.encrypt(b, rng.state()))) ==
            a + b);
    }
  }

  TEST_CASE("hex round trip") {
    const mpz_class v = keys().public_key.n();
    CHECK(paillier::from_hex(paillier::to_hex(v)) == v);
  }
}

TEST_SUITE("secure") {
  TEST_CASE("codec: resolution bound and signed wrap") {
    FixedPointCodec c;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-8.0, 8.0);
    const auto& n = keys().public_key.n();
    for (int i = 0; i < 2000; ++i) {
      const double x = u(rng);
      CHECK(std::abs(c.dequantize(c.quantize(x)) - x) <= c.resolution());
      CHECK(std::abs(c.decode(c.encode(x, n), n) - x) <= c.resolution());
    }
    CHECK(c.encode(-1.0, n) > n / 2);
    CHECK_THROWS_AS(c.quantize(8.5), EncodingError);
    CHECK_THROWS_AS(validate(FixedPointCodec{0, 8.0}), ConfigError);
  }

  TEST_CASE("sec_trans round trip, zeros and clamp errors") {
    paillier::EncryptionRng rng(3);
    FixedPointCodec codec;
    ParamView p{"l", {0.5, -0.25}, Visibility::kCommon};
    const auto c = sec_trans(p, keys().public_key, codec, rng);
    CHECK(c.count == 1);
    CHECK(c.key_fingerprint == keys().public_key.fingerprint());
    const auto back = decrypt_mean(c, keys());
    CHECK(std::abs(back.values[0] - 0.5) <= std::ldexp(1.0, -16));
    CHECK(std::abs(back.values[1] + 0.25) <= std::ldexp(1.0, -16));

    ParamView z{"z", {0.0, 0.0, 0.0}, Visibility::kCommon};
    const auto zb = decrypt_mean(sec_trans(z, keys().public_key, codec, rng), keys());
    for (double v : zb.values) CHECK(v == 0.0);

    ParamView big{"b", {0.0, 1.0, 9.5}, Visibility::kCommon};
    try {
      sec_trans(big, keys().public_key, codec, rng);
      FAIL("expected an encoding error");
    } catch (const EncodingError& e) {
      CHECK(std::string(e.what()).find("2") != std::string::npos);
    }
  }

  TEST_CASE("hom_aggregate: single, mean of ten, order independence, mixed keys") {
    paillier::EncryptionRng rng(4);
    FixedPointCodec codec;
    std::mt19937_64 gen(8);
    const auto rows = oracle::random_rows(gen, 10, 50, 1.0);
    std::vector<CipherParams> cs;
    for (const auto& r : rows) cs.push_back(sec_trans({"l", r, Visibility::kCommon}, keys().public_key, codec, rng));

    std::vector<CipherParams> one{cs[0]};
    CHECK(decrypt_mean(hom_aggregate(one, keys().public_key), keys()).values ==
          decrypt_mean(cs[0], keys()).values);

    const auto agg = hom_aggregate(cs, keys().public_key);
    CHECK(agg.count == 10);
    const auto mean = decrypt_mean(agg, keys());
    const auto ref = oracle::plain_mean(rows);
    for (std::size_t e = 0; e < 50; ++e) CHECK(std::abs(mean.values[e] - ref[e]) <= 10.0 * std::ldexp(1.0, -16));

    auto rev = cs;
    std::reverse(rev.begin(), rev.end());
    CHECK(decrypt_sum(hom_aggregate(rev, keys().public_key), keys()) == decrypt_sum(agg, keys()));

    const auto other = paillier::keygen(512, 7);
    std::vector<CipherParams> mixed{cs[0], sec_trans({"l", rows[1], Visibility::kCommon}, other.public_key, codec, rng)};
    CHECK_THROWS_AS(hom_aggregate(mixed, keys().public_key), ProtocolError);
    std::vector<CipherParams> names{cs[0], sec_trans({"m", rows[1], Visibility::kCommon}, keys().public_key, codec, rng)};
    CHECK_THROWS_AS(hom_aggregate(names, keys().public_key), ProtocolError);
  }

  TEST_CASE("wire format round trip and header") {
    paillier::EncryptionRng rng(11);
    const auto c = sec_trans({"layer_a", {0.1, -3.0, 7.9}, Visibility::kPrivate}, keys().public_key,
                             FixedPointCodec{}, rng);
    const auto bytes = serialize_cipher(c);
    CHECK(bytes.substr(0, 4) == "FLTC");
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);
    const auto back = deserialize_cipher(bytes);
    CHECK(back.layer_name == "layer_a");
    CHECK(back.ciphertexts == c.ciphertexts);
    CHECK(back.count == c.count);
    CHECK(back.codec == c.codec);
    CHECK(back.key_fingerprint == c.key_fingerprint);
    CHECK(back.visibility == Visibility::kPrivate);
    CHECK(serialize_cipher(back) == bytes);
    CHECK_THROWS(deserialize_cipher("XXXX"));
  }

  TEST_CASE("secure aggregator matches plaintext averaging") {
    std::vector<LayerSpec> sp{{"f", 4, 3, Activation::kRelu, Visibility::kCommon},
                              {"o", 3, 2, Activation::kSoftmaxOutput, Visibility::kPrivate}};
    std::vector<LayeredModel> ups;
    for (int i = 0; i < 6; ++i) ups.push_back(init_layered_model(sp, 30 + static_cast<std::uint64_t>(i)));
    std::vector<std::size_t> members{0, 1, 2, 3, 4, 5};
    SecureAggregator sec(keys(), FixedPointCodec{}, 1);
    const auto enc = sec.aggregate(ups, members, VisibilityFilter::kCommon);
    const auto plain = federated_average(ups, VisibilityFilter::kCommon);
    for (std::size_t l = 0; l < plain.size(); ++l) {
      for (std::size_t e = 0; e < plain[l].values.size(); ++e) {
        CHECK(std::abs(enc[l].values[e] - plain[l].values[e]) <= 6.0 * std::ldexp(1.0, -16));
      }
    }
    CHECK(sec.plaintext_bytes() == 6 * 15 * 8);
    CHECK(sec.ciphertext_bytes() > sec.plaintext_bytes());
  }

  TEST_CASE("security metric examples and monotonicity") {
    CHECK(security_metric(0.8, 0.6, 0.5) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(security_metric(0.8, 0.6, 1.0) == 0.8);
    CHECK(security_metric(0.3, 0.25, 0.0) == 0.25);
    CHECK_THROWS_AS(security_metric(1.2, 0.5, 0.5), InputError);
    CHECK_THROWS_AS(security_metric(0.5, 0.5, -0.1), InputError);
    CHECK(encryption_strength(512) == 0.125);
    CHECK(encryption_strength(8192) == 1.0);
    CHECK(transfer_efficiency(100, 400) == 0.25);
    for (double a = 0.0; a <= 1.0; a += 0.125) {
      for (double g = 0.0; g <= 1.0; g += 0.25) {
        CHECK(security_metric(a + 0.0625 <= 1.0 ? a + 0.0625 : 1.0, 0.4, g) >= security_metric(a, 0.4, g));
        CHECK(security_metric(0.4, a + 0.0625 <= 1.0 ? a + 0.0625 : 1.0, g) >= security_metric(0.4, a, g));
      }
    }
  }
}
