#pragma once

// Common entry point for documents arriving over MQTT or HTTP.

#include <atomic>
#include <optional>
#include <string>
#include <string_view>

#include "ecgiot/mqtt/broker.hpp"
#include "ecgiot/publisher.hpp"
#include "ecgiot/record_store.hpp"

namespace ecgiot {

struct IngestResult {
    std::uint64_t sequence = 0;
    bool duplicate = false;
    TopicClass topic_class = TopicClass::Heartbeat;
    std::string patient_id;
};

class Ingestor {
public:
    explicit Ingestor(store::RecordStore& store) : store_(store) {}

    // Parses the payload, strips the envelope's msg_id and appends. Throws
    // ValidationError for unparseable or invalid documents.
    IngestResult ingest(const std::string& topic, std::string_view payload);
    IngestResult ingest_document(const std::string& topic, nlohmann::json doc);

    // HTTP form: the topic class comes from a "kind" field ("heartbeat",
    // "pqrst", "waveform" or "status") which is removed before storage.
    IngestResult ingest_kind(std::string_view body);

    store::RecordStore& store() { return store_; }

private:
    store::RecordStore& store_;
};

// Publisher that writes straight into a local store, skipping the broker.
class IngestPublisher final : public Publisher {
public:
    explicit IngestPublisher(store::RecordStore& store) : ingestor_(store) {}
    void publish(const std::string& topic, const std::string& payload, int qos) override;

private:
    Ingestor ingestor_;
};

// Broker sink writing every clinic/# message to the store. Invalid documents
// are logged and dropped (acknowledged); storage failures propagate so the
// broker withholds the PUBACK.
class StoreSink final : public mqtt::MessageSink {
public:
    explicit StoreSink(store::RecordStore& store) : ingestor_(store) {}
    void deliver(const mqtt::Message& message) override;

    std::uint64_t rejected() const { return rejected_.load(); }

private:
    Ingestor ingestor_;
    std::atomic<std::uint64_t> rejected_{0};
};

}  // namespace ecgiot
