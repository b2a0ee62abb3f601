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

#ifndef CROWDCOUNT_PROTOCOL_H_
#define CROWDCOUNT_PROTOCOL_H_

#include <array>
#include <bit>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include "crowdcount/estimation.hpp"
#include "crowdcount/mechanisms.hpp"
#include "crowdcount/random.hpp"
#include "crowdcount/signature.hpp"

namespace crowdcount {

enum class ProtocolStatus {
  kInvalidSignature,
  kUnknownAnalyst,
  kExpiredQuery,
  kMalformedQuery,
  kUnknownQuery,
  kEpochOutOfRange,
  kEpochClosed,
  kEpochStillOpen,
  kDuplicateNonce,
  kPayloadMismatch,
  kAggregateNotFound,
};

inline const char* ProtocolStatusName(ProtocolStatus status) {
  switch (status) {
    case ProtocolStatus::kInvalidSignature: return "InvalidSignature";
    case ProtocolStatus::kUnknownAnalyst: return "UnknownAnalyst";
    case ProtocolStatus::kExpiredQuery: return "ExpiredQuery";
    case ProtocolStatus::kMalformedQuery: return "MalformedQuery";
    case ProtocolStatus::kUnknownQuery: return "UnknownQuery";
    case ProtocolStatus::kEpochOutOfRange: return "EpochOutOfRange";
    case ProtocolStatus::kEpochClosed: return "EpochClosed";
    case ProtocolStatus::kEpochStillOpen: return "EpochStillOpen";
    case ProtocolStatus::kDuplicateNonce: return "DuplicateNonce";
    case ProtocolStatus::kPayloadMismatch: return "PayloadMismatch";
    case ProtocolStatus::kAggregateNotFound: return "AggregateNotFound";
  }
  return "UnknownStatus";
}

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(ProtocolStatus status, const std::string& message)
      : std::runtime_error(std::string(ProtocolStatusName(status)) + ": " + message),
        status_(status) {}

  ProtocolStatus status() const { return status_; }

 private:
  ProtocolStatus status_;
};

// A standing query: one predicate ("are you at this POI?") answered once per
// epoch by each participating data owner between start_time and end_time.
struct Query {
  std::string query_id;
  std::string analyst_id;
  std::string poi_id;
  std::int64_t start_time = 0;    // epoch-seconds
  std::int64_t end_time = 0;      // epoch-seconds, exclusive
  std::int64_t epoch_length = 1;  // seconds
  MechanismSpec mechanism = RandomizedResponseSpec{CoinPair(0.5, 0.5)};

  std::int64_t NumEpochs() const {
    return (end_time - start_time) / epoch_length;
  }

  std::int64_t EpochIndexAt(std::int64_t timestamp) const {
    return (timestamp - start_time) / epoch_length;
  }

  std::int64_t EpochEnd(std::int64_t epoch_index) const {
    return start_time + (epoch_index + 1) * epoch_length;
  }
};

// Throws ProtocolError(kMalformedQuery) when a structural invariant fails.
inline void ValidateQuery(const Query& query) {
  if (query.query_id.empty() || query.analyst_id.empty() || query.poi_id.empty()) {
    throw ProtocolError(ProtocolStatus::kMalformedQuery,
                        "query_id, analyst_id and poi_id must be non-empty");
  }
  if (query.epoch_length < 1) {
    throw ProtocolError(ProtocolStatus::kMalformedQuery,
                        "epoch_length must be at least one second");
  }
  if (!(query.start_time < query.end_time)) {
    throw ProtocolError(ProtocolStatus::kMalformedQuery,
                        "start_time must precede end_time");
  }
}

namespace internal {

inline void PutU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}

inline void PutU64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}

inline void PutI64(std::vector<std::uint8_t>& out, std::int64_t v) {
  PutU64(out, static_cast<std::uint64_t>(v));
}

inline void PutF64(std::vector<std::uint8_t>& out, double v) {
  PutU64(out, std::bit_cast<std::uint64_t>(v));
}

inline void PutString(std::vector<std::uint8_t>& out, const std::string& s) {
  PutU32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

}  // namespace internal

// Canonical length-prefixed little-endian encoding of a query. Signatures
// are computed over these bytes, so every field is bound: changing any
// single byte of any field invalidates the signature.
inline std::vector<std::uint8_t> CanonicalQueryBytes(const Query& query) {
  std::vector<std::uint8_t> out;
  out.push_back(1);  // encoding version
  internal::PutString(out, query.query_id);
  internal::PutString(out, query.analyst_id);
  internal::PutString(out, query.poi_id);
  internal::PutI64(out, query.start_time);
  internal::PutI64(out, query.end_time);
  internal::PutI64(out, query.epoch_length);
  if (const auto* rr = std::get_if<RandomizedResponseSpec>(&query.mechanism)) {
    out.push_back(0);
    internal::PutF64(out, rr->coins.p());
    internal::PutF64(out, rr->coins.q());
  } else {
    const auto& laplace = std::get<LaplaceSpec>(query.mechanism);
    out.push_back(1);
    internal::PutF64(out, laplace.epsilon());
    internal::PutF64(out, laplace.sensitivity());
  }
  return out;
}

struct SignedQuery {
  Query query;
  std::string public_key_id;
  Signature signature;
};

inline SignedQuery SignQuery(const Query& query, const SigningKey& key,
                             const std::string& public_key_id) {
  ValidateQuery(query);
  SignedQuery signed_query;
  signed_query.query = query;
  signed_query.public_key_id = public_key_id;
  signed_query.signature = key.Sign(CanonicalQueryBytes(query));
  return signed_query;
}

using Nonce = std::array<std::uint8_t, 16>;

inline Nonce RandomNonce(RandomSource& rng) {
  Nonce nonce{};
  std::uint64_t lo = rng.NextU64();
  std::uint64_t hi = rng.NextU64();
  for (int i = 0; i < 8; ++i) {
    nonce[i] = static_cast<std::uint8_t>(lo >> (8 * i));
    nonce[8 + i] = static_cast<std::uint8_t>(hi >> (8 * i));
  }
  return nonce;
}

// One bit for randomized response, one real contribution for the
// centralized Laplace path.
struct BitPayload {
  std::uint8_t bit = 0;
};

struct RealPayload {
  double value = 0.0;
};

using ResponsePayload = std::variant<BitPayload, RealPayload>;

// A per-epoch answer. Carries no respondent identity: the nonce is uniform
// random and exists only to suppress accidental duplicates.
struct Response {
  std::string query_id;
  std::int64_t epoch_index = 0;
  ResponsePayload payload;
  Nonce nonce{};
};

// Published per-epoch aggregate. For randomized response, `estimate` holds
// the reconstructed count; for Laplace, `noisy_count` holds the privatized
// sum. Neither is set when no responses arrived (the undefined flag).
struct EpochAggregate {
  std::string query_id;
  std::int64_t epoch_index = 0;
  std::int64_t n_responses = 0;
  double raw_sum = 0.0;
  std::optional<EstimateResult> estimate;
  std::optional<double> noisy_count;
  bool closed = false;
};

struct AggregatorOptions {
  // Epochs may be closed only after their window plus this many grace
  // windows have elapsed. Simulations drive virtual time and use 0; the
  // service default is 1 to tolerate stragglers.
  std::int64_t grace_epochs = 0;
  // Seed of the Laplace noise stream. Noise is derived per (query, epoch),
  // so close order does not affect published values.
  std::uint64_t noise_seed = 0;
};

// In-memory aggregation server state. All public operations are safe for
// concurrent use; per-(query, epoch) accumulators update atomically with
// respect to each other and to close.
class Aggregator {
 public:
  explicit Aggregator(Keyring keyring, AggregatorOptions options = {})
      : keyring_(std::move(keyring)), options_(options) {}

  // Validates, authenticates, and stores a standing query. Registering the
  // byte-identical signed query again is a no-op returning the same id.
  std::string RegisterQuery(const SignedQuery& signed_query, std::int64_t now) {
    ValidateQuery(signed_query.query);
    const KeyringEntry* entry = keyring_.Find(signed_query.public_key_id);
    if (entry == nullptr) {
      throw ProtocolError(ProtocolStatus::kUnknownAnalyst,
                          "no key registered under id '" + signed_query.public_key_id + "'");
    }
    if (entry->analyst_id != signed_query.query.analyst_id) {
      throw ProtocolError(ProtocolStatus::kUnknownAnalyst,
                          "key '" + signed_query.public_key_id +
                              "' does not belong to analyst '" +
                              signed_query.query.analyst_id + "'");
    }
    std::vector<std::uint8_t> canonical = CanonicalQueryBytes(signed_query.query);
    if (!VerifySignature(canonical, signed_query.signature, entry->public_key)) {
      throw ProtocolError(ProtocolStatus::kInvalidSignature,
                          "signature does not verify against key '" +
                              signed_query.public_key_id + "'");
    }
    if (signed_query.query.end_time <= now) {
      throw ProtocolError(ProtocolStatus::kExpiredQuery,
                          "end_time is not in the future");
    }

    std::lock_guard<std::mutex> lock(mutex_);
    auto it = queries_.find(signed_query.query.query_id);
    if (it != queries_.end()) {
      if (it->second.canonical == canonical &&
          it->second.signed_query.signature == signed_query.signature &&
          it->second.signed_query.public_key_id == signed_query.public_key_id) {
        return signed_query.query.query_id;  // idempotent re-registration
      }
      throw ProtocolError(ProtocolStatus::kMalformedQuery,
                          "query_id already registered with different content");
    }
    QueryRecord record;
    record.signed_query = signed_query;
    record.canonical = std::move(canonical);
    queries_.emplace(signed_query.query.query_id, std::move(record));
    return signed_query.query.query_id;
  }

  // All queries active at `now`. Returned signed queries are the stored
  // originals, so repeated fetches serialize identically and owners may
  // cache them for the query lifetime.
  std::vector<SignedQuery> FetchQueries(std::int64_t now) const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<SignedQuery> active;
    for (const auto& [id, record] : queries_) {
      const Query& query = record.signed_query.query;
      if (query.start_time <= now && now < query.end_time) {
        active.push_back(record.signed_query);
      }
    }
    return active;
  }

  // Accumulates one response into its (query, epoch) bucket.
  void SubmitResponse(const Response& response) {
    std::lock_guard<std::mutex> lock(mutex_);
    QueryRecord& record = FindRecordLocked(response.query_id);
    RequireEpochInRangeLocked(record, response.epoch_index);
    if (record.closed.count(response.epoch_index) != 0) {
      throw ProtocolError(ProtocolStatus::kEpochClosed,
                          "aggregate for this epoch is already published");
    }
    double value = 0.0;
    if (IsRandomizedResponse(record.signed_query.query.mechanism)) {
      const auto* bit = std::get_if<BitPayload>(&response.payload);
      if (bit == nullptr) {
        throw ProtocolError(ProtocolStatus::kPayloadMismatch,
                            "randomized-response query requires a bit payload");
      }
      if (bit->bit > 1) {
        throw ProtocolError(ProtocolStatus::kPayloadMismatch,
                            "bit payload must be 0 or 1");
      }
      value = bit->bit;
    } else {
      const auto* real = std::get_if<RealPayload>(&response.payload);
      if (real == nullptr) {
        throw ProtocolError(ProtocolStatus::kPayloadMismatch,
                            "laplace query requires a real payload");
      }
      value = real->value;
    }
    EpochAccumulator& acc = record.open[response.epoch_index];
    std::string nonce_key(response.nonce.begin(), response.nonce.end());
    if (!acc.nonces.insert(std::move(nonce_key)).second) {
      throw ProtocolError(ProtocolStatus::kDuplicateNonce,
                          "a response with this nonce was already accepted");
    }
    acc.n_responses += 1;
    acc.raw_sum += value;
  }

  // Publishes the epoch's aggregate once its window (plus grace) has
  // elapsed. Idempotent: closing an already-closed epoch returns the stored
  // aggregate unchanged.
  EpochAggregate CloseEpoch(const std::string& query_id, std::int64_t epoch_index,
                            std::int64_t now) {
    std::lock_guard<std::mutex> lock(mutex_);
    QueryRecord& record = FindRecordLocked(query_id);
    RequireEpochInRangeLocked(record, epoch_index);
    auto closed_it = record.closed.find(epoch_index);
    if (closed_it != record.closed.end()) {
      return closed_it->second;
    }
    const Query& query = record.signed_query.query;
    std::int64_t closeable_at =
        query.EpochEnd(epoch_index) + options_.grace_epochs * query.epoch_length;
    if (now < closeable_at) {
      throw ProtocolError(ProtocolStatus::kEpochStillOpen,
                          "epoch window (plus grace) has not elapsed");
    }

    EpochAggregate aggregate;
    aggregate.query_id = query_id;
    aggregate.epoch_index = epoch_index;
    aggregate.closed = true;
    auto open_it = record.open.find(epoch_index);
    if (open_it != record.open.end()) {
      aggregate.n_responses = open_it->second.n_responses;
      aggregate.raw_sum = open_it->second.raw_sum;
      record.open.erase(open_it);  // nonce set no longer needed
    }
    if (aggregate.n_responses > 0) {
      if (const auto* rr = std::get_if<RandomizedResponseSpec>(&query.mechanism)) {
        if (rr->coins.p() > 0.0) {
          aggregate.estimate = EstimateTrueYes(
              aggregate.raw_sum, aggregate.n_responses, rr->coins);
        }
      } else {
        const auto& laplace = std::get<LaplaceSpec>(query.mechanism);
        RandomSource noise_rng = NoiseStream(query_id, epoch_index);
        aggregate.noisy_count =
            aggregate.raw_sum + LaplaceSample(laplace.scale(), noise_rng);
      }
    }
    record.closed.emplace(epoch_index, aggregate);
    return aggregate;
  }

  // The published aggregate, or kAggregateNotFound if the epoch was never
  // closed.
  EpochAggregate Aggregate(const std::string& query_id,
                           std::int64_t epoch_index) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = queries_.find(query_id);
    if (it == queries_.end()) {
      throw ProtocolError(ProtocolStatus::kUnknownQuery,
                          "no query registered under id '" + query_id + "'");
    }
    auto closed_it = it->second.closed.find(epoch_index);
    if (closed_it == it->second.closed.end()) {
      throw ProtocolError(ProtocolStatus::kAggregateNotFound,
                          "epoch has not been closed");
    }
    return closed_it->second;
  }

  // Every registered query regardless of activity window, for snapshotting.
  std::vector<SignedQuery> RegisteredQueries() const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<SignedQuery> all;
    for (const auto& [id, record] : queries_) {
      all.push_back(record.signed_query);
    }
    return all;
  }

  // Every closed aggregate, for snapshotting.
  std::vector<EpochAggregate> ClosedAggregates() const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<EpochAggregate> all;
    for (const auto& [id, record] : queries_) {
      for (const auto& [epoch, aggregate] : record.closed) {
        all.push_back(aggregate);
      }
    }
    return all;
  }

 private:
  struct EpochAccumulator {
    std::int64_t n_responses = 0;
    double raw_sum = 0.0;
    std::unordered_set<std::string> nonces;
  };

  struct QueryRecord {
    SignedQuery signed_query;
    std::vector<std::uint8_t> canonical;
    std::map<std::int64_t, EpochAccumulator> open;
    std::map<std::int64_t, EpochAggregate> closed;
  };

  QueryRecord& FindRecordLocked(const std::string& query_id) {
    auto it = queries_.find(query_id);
    if (it == queries_.end()) {
      throw ProtocolError(ProtocolStatus::kUnknownQuery,
                          "no query registered under id '" + query_id + "'");
    }
    return it->second;
  }

  void RequireEpochInRangeLocked(const QueryRecord& record,
                                 std::int64_t epoch_index) const {
    if (epoch_index < 0 ||
        epoch_index >= record.signed_query.query.NumEpochs()) {
      throw ProtocolError(ProtocolStatus::kEpochOutOfRange,
                          "epoch index outside the query's valid range");
    }
  }

  RandomSource NoiseStream(const std::string& query_id,
                           std::int64_t epoch_index) const {
    // FNV-1a over the query id keeps the stream independent of close order
    // and of other queries.
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : query_id) {
      h = (h ^ c) * 1099511628211ULL;
    }
    return RandomSource(options_.noise_seed)
        .Fork(h ^ static_cast<std::uint64_t>(epoch_index));
  }

  Keyring keyring_;
  AggregatorOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, QueryRecord> queries_;
};

// Uniform face of an aggregator for protocol clients: either the in-process
// object or a remote HTTP service.
class AggregatorTransport {
 public:
  virtual ~AggregatorTransport() = default;

  virtual std::string RegisterQuery(const SignedQuery& signed_query,
                                    std::int64_t now) = 0;
  virtual std::vector<SignedQuery> FetchQueries(std::int64_t now) = 0;
  virtual void SubmitResponse(const Response& response) = 0;
  virtual EpochAggregate CloseEpoch(const std::string& query_id,
                                    std::int64_t epoch_index, std::int64_t now) = 0;
  virtual EpochAggregate Aggregate(const std::string& query_id,
                                   std::int64_t epoch_index) = 0;
};

class InProcessTransport final : public AggregatorTransport {
 public:
  explicit InProcessTransport(Aggregator& aggregator) : aggregator_(aggregator) {}

  std::string RegisterQuery(const SignedQuery& signed_query,
                            std::int64_t now) override {
    return aggregator_.RegisterQuery(signed_query, now);
  }
  std::vector<SignedQuery> FetchQueries(std::int64_t now) override {
    return aggregator_.FetchQueries(now);
  }
  void SubmitResponse(const Response& response) override {
    aggregator_.SubmitResponse(response);
  }
  EpochAggregate CloseEpoch(const std::string& query_id, std::int64_t epoch_index,
                            std::int64_t now) override {
    return aggregator_.CloseEpoch(query_id, epoch_index, now);
  }
  EpochAggregate Aggregate(const std::string& query_id,
                           std::int64_t epoch_index) override {
    return aggregator_.Aggregate(query_id, epoch_index);
  }

 private:
  Aggregator& aggregator_;
};

}  // namespace crowdcount

#endif  // CROWDCOUNT_PROTOCOL_H_
