// Scripted agent for the environment protocol: answers every observation
// with the same action. Used to exercise the protocol end to end.

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"Constant-action agent for the environment protocol"};
    double value = 0;
    std::size_t episodes = 1;
    app.add_option("--value", value, "Action value sent for every observation")->capture_default_str();
    app.add_option("--episodes", episodes, "Stop after this many episode summaries")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    nlohmann::json action = {{"type", "action"}, {"value", value}};
    if (value == static_cast<double>(static_cast<long long>(value))) {
        action["value"] = static_cast<long long>(value);
    }
    const std::string reply = action.dump();

    std::size_t finished = 0;
    std::string line;
    while (finished < episodes && std::getline(std::cin, line)) {
        const auto msg = nlohmann::json::parse(line, nullptr, false);
        if (msg.is_discarded() || !msg.is_object()) {
            std::cout << R"({"type":"error","msg":"unreadable message"})" << std::endl;
            return 1;
        }
        const std::string type = msg.value("type", "");
        if (type == "obs" && !msg.value("done", false)) {
            std::cout << reply << std::endl;
        } else if (type == "episode_summary") {
            ++finished;
        } else if (type == "error") {
            std::cerr << "environment: " << msg.value("msg", std::string("?")) << "\n";
        }
    }
    return finished == episodes ? 0 : 1;
}
