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

#include "crowdcount/protocol.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "gtest/gtest.h"
#include "crowdcount/wire_json.hpp"

namespace crowdcount {
namespace {

class ProtocolTest : public ::testing::Test {
 protected:
  ProtocolTest()
      : key_(SigningKey::FromSeed(std::uint64_t{1001})),
        aggregator_(MakeKeyring(), AggregatorOptions{.grace_epochs = 0,
                                                     .noise_seed = 99}) {}

  Keyring MakeKeyring() {
    Keyring keyring;
    keyring.Add(KeyringEntry{"campus-study", "key-1", key_.public_key()});
    return keyring;
  }

  Query MakeQuery(const std::string& id = "q-gym",
                  MechanismSpec mechanism = RandomizedResponseSpec{
                      CoinPair(0.3, 0.3)}) {
    Query query;
    query.query_id = id;
    query.analyst_id = "campus-study";
    query.poi_id = "gym";
    query.start_time = 1000;
    query.end_time = 1000 + 10 * 60;  // ten one-minute epochs
    query.epoch_length = 60;
    query.mechanism = mechanism;
    return query;
  }

  SignedQuery Signed(const Query& query) {
    return SignQuery(query, key_, "key-1");
  }

  Response MakeResponse(const std::string& query_id, std::int64_t epoch,
                        int bit, std::uint64_t nonce_seed) {
    Response response;
    response.query_id = query_id;
    response.epoch_index = epoch;
    response.payload = BitPayload{static_cast<std::uint8_t>(bit)};
    RandomSource rng(nonce_seed);
    response.nonce = RandomNonce(rng);
    return response;
  }

  SigningKey key_;
  Aggregator aggregator_;
};

void ExpectStatus(ProtocolStatus expected, const std::function<void()>& fn) {
  try {
    fn();
    FAIL() << "expected " << ProtocolStatusName(expected);
  } catch (const ProtocolError& error) {
    EXPECT_EQ(error.status(), expected) << error.what();
  }
}

TEST_F(ProtocolTest, RegisterThenFetch) {
  EXPECT_TRUE(aggregator_.FetchQueries(1000).empty());
  std::string id = aggregator_.RegisterQuery(Signed(MakeQuery()), 500);
  EXPECT_EQ(id, "q-gym");
  auto active = aggregator_.FetchQueries(1000);
  ASSERT_EQ(active.size(), 1u);
  EXPECT_EQ(active[0].query.query_id, "q-gym");
}

TEST_F(ProtocolTest, FetchFiltersByActivityWindow) {
  aggregator_.RegisterQuery(Signed(MakeQuery()), 500);
  EXPECT_TRUE(aggregator_.FetchQueries(999).empty());    // not yet started
  EXPECT_EQ(aggregator_.FetchQueries(1000).size(), 1u);  // first epoch
  EXPECT_EQ(aggregator_.FetchQueries(1599).size(), 1u);  // last second
  EXPECT_TRUE(aggregator_.FetchQueries(1600).empty());   // ended
}

TEST_F(ProtocolTest, FetchedQueriesSerializeIdenticallyAcrossCalls) {
  aggregator_.RegisterQuery(Signed(MakeQuery()), 500);
  std::string first = SignedQueryToJson(aggregator_.FetchQueries(1100)[0]).dump();
  std::string second = SignedQueryToJson(aggregator_.FetchQueries(1400)[0]).dump();
  EXPECT_EQ(first, second);
}

TEST_F(ProtocolTest, RegistrationIsIdempotentForIdenticalContent) {
  SignedQuery sq = Signed(MakeQuery());
  EXPECT_EQ(aggregator_.RegisterQuery(sq, 500), "q-gym");
  EXPECT_EQ(aggregator_.RegisterQuery(sq, 600), "q-gym");
  EXPECT_EQ(aggregator_.FetchQueries(1000).size(), 1u);
}

TEST_F(ProtocolTest, ConflictingContentUnderSameIdIsRejected) {
  aggregator_.RegisterQuery(Signed(MakeQuery()), 500);
  Query other = MakeQuery();
  other.end_time += 60;
  ExpectStatus(ProtocolStatus::kMalformedQuery, [&] {
    aggregator_.RegisterQuery(Signed(other), 500);
  });
}

TEST_F(ProtocolTest, RegistrationErrors) {
  ExpectStatus(ProtocolStatus::kExpiredQuery, [&] {
    aggregator_.RegisterQuery(Signed(MakeQuery()), 2000);
  });

  SignedQuery unknown_key = Signed(MakeQuery());
  unknown_key.public_key_id = "key-404";
  ExpectStatus(ProtocolStatus::kUnknownAnalyst, [&] {
    aggregator_.RegisterQuery(unknown_key, 500);
  });

  Query wrong_analyst = MakeQuery();
  wrong_analyst.analyst_id = "someone-else";
  ExpectStatus(ProtocolStatus::kUnknownAnalyst, [&] {
    aggregator_.RegisterQuery(Signed(wrong_analyst), 500);
  });

  SignedQuery tampered = Signed(MakeQuery());
  tampered.query.end_time += 1;
  ExpectStatus(ProtocolStatus::kInvalidSignature, [&] {
    aggregator_.RegisterQuery(tampered, 500);
  });

  Query malformed = MakeQuery();
  malformed.epoch_length = 0;
  malformed.end_time = malformed.start_time + 10;
  ExpectStatus(ProtocolStatus::kMalformedQuery, [&] {
    SignedQuery sq;
    sq.query = malformed;
    sq.public_key_id = "key-1";
    aggregator_.RegisterQuery(sq, 500);
  });
}

// No query with a bad signature is ever observable, whatever the mutation.
TEST_F(ProtocolTest, UnverifiedQueriesAreNeverObservable) {
  RandomSource rng(321);
  for (int trial = 0; trial < 100; ++trial) {
    Query query = MakeQuery("q-fuzz-" + std::to_string(trial));
    SignedQuery sq = Signed(query);
    sq.signature[rng.NextU64() % sq.signature.size()] ^=
        static_cast<std::uint8_t>(1 + rng.NextU64() % 255);
    EXPECT_THROW(aggregator_.RegisterQuery(sq, 500), ProtocolError);
  }
  EXPECT_TRUE(aggregator_.FetchQueries(1100).empty());
}

TEST_F(ProtocolTest, SubmitAccumulatesAndCloseEstimates) {
  aggregator_.RegisterQuery(Signed(MakeQuery()), 500);
  aggregator_.SubmitResponse(MakeResponse("q-gym", 0, 1, 1));
  aggregator_.SubmitResponse(MakeResponse("q-gym", 0, 0, 2));
  aggregator_.SubmitResponse(MakeResponse("q-gym", 0, 1, 3));

  EpochAggregate aggregate = aggregator_.CloseEpoch("q-gym", 0, 1060);
  EXPECT_EQ(aggregate.n_responses, 3);
  EXPECT_DOUBLE_EQ(aggregate.raw_sum, 2.0);
  ASSERT_TRUE(aggregate.estimate.has_value());
  EXPECT_TRUE(aggregate.closed);
  EXPECT_FALSE(aggregate.noisy_count.has_value());
}

TEST_F(ProtocolTest, DuplicateNonceLeavesCountersUnchanged) {
  aggregator_.RegisterQuery(Signed(MakeQuery()), 500);
  Response response = MakeResponse("q-gym", 0, 1, 42);
  aggregator_.SubmitResponse(response);
  ExpectStatus(ProtocolStatus::kDuplicateNonce, [&] {
    aggregator_.SubmitResponse(response);
  });
  // Same nonce in a different epoch is a distinct submission.
  Response other_epoch = response;
  other_epoch.epoch_index = 1;
  EXPECT_NO_THROW(aggregator_.SubmitResponse(other_epoch));

  EpochAggregate aggregate = aggregator_.CloseEpoch("q-gym", 0, 1060);
  EXPECT_EQ(aggregate.n_responses, 1);
  EXPECT_DOUBLE_EQ(aggregate.raw_sum, 1.0);
}

TEST_F(ProtocolTest, SubmitErrors) {
  aggregator_.RegisterQuery(Signed(MakeQuery()), 500);

  ExpectStatus(ProtocolStatus::kUnknownQuery, [&] {
    aggregator_.SubmitResponse(MakeResponse("q-nope", 0, 1, 1));
  });
  ExpectStatus(ProtocolStatus::kEpochOutOfRange, [&] {
    aggregator_.SubmitResponse(MakeResponse("q-gym", -1, 1, 1));
  });
  ExpectStatus(ProtocolStatus::kEpochOutOfRange, [&] {
    aggregator_.SubmitResponse(MakeResponse("q-gym", 10, 1, 1));
  });

  Response real_to_rr = MakeResponse("q-gym", 0, 1, 5);
  real_to_rr.payload = RealPayload{1.0};
  ExpectStatus(ProtocolStatus::kPayloadMismatch, [&] {
    aggregator_.SubmitResponse(real_to_rr);
  });

  Response wild_bit = MakeResponse("q-gym", 0, 1, 6);
  wild_bit.payload = BitPayload{7};
  ExpectStatus(ProtocolStatus::kPayloadMismatch, [&] {
    aggregator_.SubmitResponse(wild_bit);
  });

  aggregator_.CloseEpoch("q-gym", 3, 1240);
  ExpectStatus(ProtocolStatus::kEpochClosed, [&] {
    aggregator_.SubmitResponse(MakeResponse("q-gym", 3, 1, 7));
  });
}

TEST_F(ProtocolTest, BitToLaplaceQueryIsPayloadMismatch) {
  aggregator_.RegisterQuery(
      Signed(MakeQuery("q-lap", LaplaceSpec(0.5, 1.0))), 500);
  ExpectStatus(ProtocolStatus::kPayloadMismatch, [&] {
    aggregator_.SubmitResponse(MakeResponse("q-lap", 0, 1, 8));
  });
}

TEST_F(ProtocolTest, CloseRespectsEpochWindowAndGrace) {
  Aggregator graced(MakeKeyring(),
                    AggregatorOptions{.grace_epochs = 1, .noise_seed = 0});
  graced.RegisterQuery(Signed(MakeQuery()), 500);
  // Epoch 0 spans [1000, 1060); with one grace epoch it closes at 1120.
  ExpectStatus(ProtocolStatus::kEpochStillOpen,
               [&] { graced.CloseEpoch("q-gym", 0, 1119); });
  EXPECT_NO_THROW(graced.CloseEpoch("q-gym", 0, 1120));

  aggregator_.RegisterQuery(Signed(MakeQuery()), 500);  // zero-grace default
  ExpectStatus(ProtocolStatus::kEpochStillOpen,
               [&] { aggregator_.CloseEpoch("q-gym", 0, 1059); });
  EXPECT_NO_THROW(aggregator_.CloseEpoch("q-gym", 0, 1060));
}

TEST_F(ProtocolTest, CloseWithNoResponsesPublishesUndefinedAggregate) {
  aggregator_.RegisterQuery(Signed(MakeQuery()), 500);
  EpochAggregate aggregate = aggregator_.CloseEpoch("q-gym", 0, 1060);
  EXPECT_EQ(aggregate.n_responses, 0);
  EXPECT_DOUBLE_EQ(aggregate.raw_sum, 0.0);
  EXPECT_FALSE(aggregate.estimate.has_value());
  EXPECT_FALSE(aggregate.noisy_count.has_value());
  EXPECT_TRUE(aggregate.closed);
}

TEST_F(ProtocolTest, RepeatedCloseReturnsIdenticalAggregate) {
  aggregator_.RegisterQuery(Signed(MakeQuery()), 500);
  aggregator_.SubmitResponse(MakeResponse("q-gym", 0, 1, 9));
  std::string first = AggregateToJson(aggregator_.CloseEpoch("q-gym", 0, 1060)).dump();
  std::string second = AggregateToJson(aggregator_.CloseEpoch("q-gym", 0, 1060)).dump();
  std::string third = AggregateToJson(aggregator_.CloseEpoch("q-gym", 0, 9999)).dump();
  EXPECT_EQ(first, second);
  EXPECT_EQ(first, third);
}

TEST_F(ProtocolTest, AggregateLookupRequiresClose) {
  aggregator_.RegisterQuery(Signed(MakeQuery()), 500);
  ExpectStatus(ProtocolStatus::kAggregateNotFound,
               [&] { aggregator_.Aggregate("q-gym", 0); });
  ExpectStatus(ProtocolStatus::kUnknownQuery,
               [&] { aggregator_.Aggregate("q-nope", 0); });
  aggregator_.CloseEpoch("q-gym", 0, 1060);
  EXPECT_EQ(aggregator_.Aggregate("q-gym", 0).n_responses, 0);
}

TEST_F(ProtocolTest, SeededThousandOwnerEpochMatchesOracles) {
  aggregator_.RegisterQuery(Signed(MakeQuery()), 500);
  CoinPair coins(0.3, 0.3);
  RandomSource master(20260810);
  for (int owner = 0; owner < 1000; ++owner) {
    RandomSource rng = master.Fork(owner);
    Response response;
    response.query_id = "q-gym";
    response.epoch_index = 0;
    response.payload = BitPayload{static_cast<std::uint8_t>(
        RrRandomize(owner < 800 ? 1 : 0, coins, rng))};
    response.nonce = RandomNonce(rng);
    aggregator_.SubmitResponse(response);
  }
  EpochAggregate aggregate = aggregator_.CloseEpoch("q-gym", 0, 1060);
  EXPECT_EQ(aggregate.n_responses, 1000);
  // E[raw_sum] = 800*0.51 + 200*0.21 = 450, sd = sqrt(233.1).
  EXPECT_NEAR(aggregate.raw_sum, 450.0, 4.0 * std::sqrt(233.1));
  ASSERT_TRUE(aggregate.estimate.has_value());
  EXPECT_NEAR(aggregate.estimate->y_a_raw, 800.0, 4.0 * 50.892);
}

TEST_F(ProtocolTest, LaplaceCloseIsSeededAndOrderIndependent) {
  auto run = [&](std::uint64_t noise_seed, bool reverse) {
    Aggregator agg(MakeKeyring(), AggregatorOptions{.grace_epochs = 0,
                                                    .noise_seed = noise_seed});
    agg.RegisterQuery(Signed(MakeQuery("q-lap", LaplaceSpec(0.5, 1.0))), 500);
    for (std::int64_t epoch : {0, 1}) {
      for (int owner = 0; owner < 50; ++owner) {
        Response response;
        response.query_id = "q-lap";
        response.epoch_index = epoch;
        response.payload = RealPayload{owner < 30 ? 1.0 : 0.0};
        RandomSource rng(1000 + owner * 2 + epoch);
        response.nonce = RandomNonce(rng);
        agg.SubmitResponse(response);
      }
    }
    std::vector<double> noisy(2);
    if (reverse) {
      noisy[1] = *agg.CloseEpoch("q-lap", 1, 2000).noisy_count;
      noisy[0] = *agg.CloseEpoch("q-lap", 0, 2000).noisy_count;
    } else {
      noisy[0] = *agg.CloseEpoch("q-lap", 0, 2000).noisy_count;
      noisy[1] = *agg.CloseEpoch("q-lap", 1, 2000).noisy_count;
    }
    return noisy;
  };

  std::vector<double> forward = run(7, false);
  std::vector<double> reversed = run(7, true);
  EXPECT_EQ(forward, reversed);
  EXPECT_NE(forward[0], forward[1]);  // distinct per-epoch noise
  std::vector<double> other_seed = run(8, false);
  EXPECT_NE(forward[0], other_seed[0]);
  // Noise is centered on the true sum of 30.
  EXPECT_NEAR(forward[0], 30.0, 20.0 / 0.5);
}

// Under concurrent submission the final counters equal a sequential ledger
// of the accepted requests; rejected duplicates change nothing.
TEST_F(ProtocolTest, ConcurrentSubmissionConservesCounts) {
  aggregator_.RegisterQuery(Signed(MakeQuery()), 500);
  constexpr int kThreads = 4;
  constexpr int kPerThread = 500;

  std::vector<std::vector<Response>> planned(kThreads);
  std::int64_t expected_sum = 0;
  RandomSource master(555);
  for (int t = 0; t < kThreads; ++t) {
    RandomSource rng = master.Fork(t);
    for (int i = 0; i < kPerThread; ++i) {
      Response response;
      response.query_id = "q-gym";
      response.epoch_index = 0;
      int bit = rng.Bernoulli(0.5) ? 1 : 0;
      expected_sum += bit;
      response.payload = BitPayload{static_cast<std::uint8_t>(bit)};
      response.nonce = RandomNonce(rng);
      planned[t].push_back(response);
    }
  }

  std::atomic<int> duplicate_rejections{0};
  std::vector<std::thread> workers;
  workers.reserve(kThreads);
  for (int t = 0; t < kThreads; ++t) {
    workers.emplace_back([&, t] {
      for (int i = 0; i < kPerThread; ++i) {
        aggregator_.SubmitResponse(planned[t][i]);
        if (i % 100 == 0) {
          try {
            aggregator_.SubmitResponse(planned[t][i]);
          } catch (const ProtocolError& error) {
            if (error.status() == ProtocolStatus::kDuplicateNonce) {
              duplicate_rejections.fetch_add(1);
            }
          }
        }
      }
    });
  }
  for (auto& worker : workers) {
    worker.join();
  }

  EXPECT_EQ(duplicate_rejections.load(), kThreads * (kPerThread / 100));
  EpochAggregate aggregate = aggregator_.CloseEpoch("q-gym", 0, 1060);
  EXPECT_EQ(aggregate.n_responses, kThreads * kPerThread);
  EXPECT_DOUBLE_EQ(aggregate.raw_sum, static_cast<double>(expected_sum));
}

// The serialized response schema carries nothing that varies per respondent
// identity beyond the random nonce.
TEST_F(ProtocolTest, ResponseSchemaIsAnonymous) {
  Response response = MakeResponse("q-gym", 2, 1, 77);
  Json j = ResponseToJson(response);
  std::set<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) {
    keys.insert(it.key());
  }
  EXPECT_EQ(keys, (std::set<std::string>{"query_id", "epoch_index", "payload",
                                         "nonce"}));
  std::set<std::string> payload_keys;
  for (auto it = j["payload"].begin(); it != j["payload"].end(); ++it) {
    payload_keys.insert(it.key());
  }
  EXPECT_EQ(payload_keys, std::set<std::string>{"bit"});
}

TEST_F(ProtocolTest, WireRoundTripsPreserveRecords) {
  SignedQuery sq = Signed(MakeQuery("q-wire", LaplaceSpec(0.25, 2.0)));
  SignedQuery decoded = SignedQueryFromJson(SignedQueryToJson(sq));
  EXPECT_EQ(CanonicalQueryBytes(decoded.query), CanonicalQueryBytes(sq.query));
  EXPECT_EQ(decoded.signature, sq.signature);
  EXPECT_EQ(decoded.public_key_id, sq.public_key_id);

  Response response = MakeResponse("q-wire", 3, 1, 123);
  response.payload = RealPayload{0.625};
  Response round = ResponseFromJson(ResponseToJson(response));
  EXPECT_EQ(round.query_id, response.query_id);
  EXPECT_EQ(round.epoch_index, response.epoch_index);
  EXPECT_EQ(round.nonce, response.nonce);
  EXPECT_DOUBLE_EQ(std::get<RealPayload>(round.payload).value, 0.625);
}

}  // namespace
}  // namespace crowdcount
