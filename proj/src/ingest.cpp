#include "ecgiot/ingest.hpp"

#include <spdlog/spdlog.h>

namespace ecgiot {

using nlohmann::json;

namespace {

json parse_object(std::string_view text)
{
    json doc = json::parse(text.begin(), text.end(), nullptr, false);
    if (doc.is_discarded())
        throw ValidationError(ValidationError::Kind::Schema, "$", "body is not valid JSON");
    if (!doc.is_object())
        throw ValidationError(ValidationError::Kind::Schema, "$", "document must be a JSON object");
    return doc;
}

}  // namespace

IngestResult Ingestor::ingest(const std::string& topic, std::string_view payload)
{
    return ingest_document(topic, parse_object(payload));
}

IngestResult Ingestor::ingest_document(const std::string& topic, json doc)
{
    const auto parsed = parse_topic(topic);
    if (!parsed)
        throw ValidationError(ValidationError::Kind::Schema, "topic", "unknown topic '" + topic + "'");
    if (!doc.is_object())
        throw ValidationError(ValidationError::Kind::Schema, "$", "document must be a JSON object");
    std::optional<std::string> msg_id;
    if (auto it = doc.find("msg_id"); it != doc.end()) {
        if (!it->is_string())
            throw ValidationError(ValidationError::Kind::Schema, "msg_id", "expected a string");
        msg_id = it->get<std::string>();
        doc.erase(it);
    }
    const auto r = store_.append(topic, parsed->patient_id, doc, msg_id);
    return {r.sequence, r.duplicate, parsed->topic_class, parsed->patient_id};
}

IngestResult Ingestor::ingest_kind(std::string_view body)
{
    json doc = parse_object(body);
    const auto it = doc.find("kind");
    if (it == doc.end() || !it->is_string())
        throw ValidationError(ValidationError::Kind::Schema, "kind", "missing or not a string");
    const auto cls = topic_class_from_name(it->get<std::string>());
    if (!cls)
        throw ValidationError(ValidationError::Kind::Schema, "kind", "unknown kind '" + it->get<std::string>() + "'");
    doc.erase(it);
    // Validate first so a bad patient_id is reported against the document.
    const std::string patient = validate_document(*cls, doc);
    return ingest_document(make_topic(patient, *cls), std::move(doc));
}

void IngestPublisher::publish(const std::string& topic, const std::string& payload, int)
{
    ingestor_.ingest(topic, payload);
}

void StoreSink::deliver(const mqtt::Message& message)
{
    if (!parse_topic(message.topic))
        return;  // not ours
    try {
        const auto r = ingestor_.ingest(message.topic, message.payload_view());
        if (r.duplicate)
            spdlog::debug("sink: duplicate on {} (seq {})", message.topic, r.sequence);
    } catch (const ValidationError& e) {
        ++rejected_;
        spdlog::warn("sink: rejected message on {}: {}", message.topic, e.what());
    }
}

}  // namespace ecgiot
