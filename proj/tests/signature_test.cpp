//
// Copyright 2026 The crowdcount Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "crowdcount/signature.hpp"

#include <cstdint>
#include <vector>

#include "gtest/gtest.h"
#include "crowdcount/protocol.hpp"

namespace crowdcount {
namespace {

Query TestQuery() {
  Query query;
  query.query_id = "q-gym";
  query.analyst_id = "campus-study";
  query.poi_id = "gym";
  query.start_time = 1000;
  query.end_time = 2000;
  query.epoch_length = 100;
  query.mechanism = RandomizedResponseSpec{CoinPair(0.3, 0.3)};
  return query;
}

TEST(SigningKeyTest, SignVerifyRoundTrip) {
  SigningKey key = SigningKey::FromSeed(std::uint64_t{7});
  std::vector<std::uint8_t> message = {1, 2, 3, 4};
  Signature sig = key.Sign(message);
  EXPECT_TRUE(VerifySignature(message, sig, key.public_key()));
}

TEST(SigningKeyTest, WrongKeyRejects) {
  SigningKey a = SigningKey::FromSeed(std::uint64_t{1});
  SigningKey b = SigningKey::FromSeed(std::uint64_t{2});
  std::vector<std::uint8_t> message = {9, 9, 9};
  EXPECT_FALSE(VerifySignature(message, a.Sign(message), b.public_key()));
}

TEST(SigningKeyTest, SeededKeysAreReproducible) {
  SigningKey a = SigningKey::FromSeed(std::uint64_t{42});
  SigningKey b = SigningKey::FromSeed(std::uint64_t{42});
  EXPECT_EQ(a.public_key(), b.public_key());
}

TEST(SignQueryTest, RoundTripAccepts) {
  SigningKey key = SigningKey::FromSeed(std::uint64_t{3});
  SignedQuery sq = SignQuery(TestQuery(), key, "key-1");
  EXPECT_TRUE(VerifySignature(CanonicalQueryBytes(sq.query), sq.signature,
                              key.public_key()));
}

TEST(SignQueryTest, SignatureBindsEveryField) {
  SigningKey key = SigningKey::FromSeed(std::uint64_t{3});
  SignedQuery sq = SignQuery(TestQuery(), key, "key-1");

  Query tampered = sq.query;
  tampered.end_time += 1;
  EXPECT_FALSE(VerifySignature(CanonicalQueryBytes(tampered), sq.signature,
                               key.public_key()));
}

// Any single-byte mutation of the canonical encoding invalidates the
// signature.
TEST(SignQueryTest, EveryByteOfTheEncodingIsCovered) {
  SigningKey key = SigningKey::FromSeed(std::uint64_t{11});
  SignedQuery sq = SignQuery(TestQuery(), key, "key-1");
  std::vector<std::uint8_t> canonical = CanonicalQueryBytes(sq.query);
  RandomSource rng(123);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint8_t> mutated = canonical;
    std::size_t pos = static_cast<std::size_t>(rng.NextU64() % mutated.size());
    std::uint8_t flip =
        static_cast<std::uint8_t>(1 + (rng.NextU64() % 255));
    mutated[pos] ^= flip;
    ASSERT_FALSE(VerifySignature(mutated, sq.signature, key.public_key()))
        << "byte " << pos;
  }
}

TEST(CanonicalEncodingTest, DistinctMechanismsEncodeDistinctly) {
  Query rr = TestQuery();
  Query laplace = TestQuery();
  laplace.mechanism = LaplaceSpec(0.3895, 1.0);
  EXPECT_NE(CanonicalQueryBytes(rr), CanonicalQueryBytes(laplace));
}

TEST(CanonicalEncodingTest, EncodingIsDeterministic) {
  EXPECT_EQ(CanonicalQueryBytes(TestQuery()), CanonicalQueryBytes(TestQuery()));
}

TEST(Base64Test, RoundTripsBinary) {
  std::vector<std::uint8_t> bytes;
  RandomSource rng(9);
  for (int len : {0, 1, 2, 3, 31, 32, 33, 64}) {
    bytes.resize(len);
    for (auto& b : bytes) {
      b = static_cast<std::uint8_t>(rng.NextU64());
    }
    EXPECT_EQ(Base64Decode(Base64Encode(bytes)), bytes) << "len=" << len;
  }
  EXPECT_THROW(Base64Decode("!!!not base64!!!"), std::invalid_argument);
}

TEST(KeyringTest, FindsByPublicKeyId) {
  Keyring keyring;
  SigningKey key = SigningKey::FromSeed(std::uint64_t{5});
  keyring.Add(KeyringEntry{"analyst-a", "key-a", key.public_key()});
  ASSERT_NE(keyring.Find("key-a"), nullptr);
  EXPECT_EQ(keyring.Find("key-a")->analyst_id, "analyst-a");
  EXPECT_EQ(keyring.Find("key-b"), nullptr);
  EXPECT_THROW(keyring.Add(KeyringEntry{"", "key-c", key.public_key()}),
               std::invalid_argument);
}

}  // namespace
}  // namespace crowdcount
