#pragma once

#include <string>

namespace ecgiot {

// Outbound telemetry transport. The MQTT client implements it; tests record.
class Publisher {
public:
    virtual ~Publisher() = default;
    virtual void publish(const std::string& topic, const std::string& payload, int qos) = 0;
};

}  // namespace ecgiot
