// Serves the toy detector over the newline-delimited JSON adapter protocol:
// one {"id", "image"} request per line in, one {"id", "detections"} line out.
#include <iostream>
#include <string>

#include "json.hpp"
#include "patchkit/image_io.hpp"
#include "patchkit/toy_detector.hpp"

int main(int argc, char** argv) {
    using nlohmann::json;
    const std::uint64_t seed = argc > 1 ? std::stoull(argv[1]) : 7;
    patchkit::ToyEvalDetector detector("toy", patchkit::ToyDetectorParams::standard(seed), {});

    std::string line;
    while (std::getline(std::cin, line)) {
        json reply;
        try {
            const json req = json::parse(line);
            reply["id"] = req.at("id");
            json dets = json::array();
            for (const auto& d : detector.detect(patchkit::read_image(req.at("image").get<std::string>())).detections)
                dets.push_back({{"box", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}}, {"label", d.label}, {"score", d.confidence}});
            reply["detections"] = dets;
        } catch (const std::exception& e) {
            std::cerr << "toy_adapter: " << e.what() << "\n";
            return 1;
        }
        std::cout << reply.dump() << std::endl;
    }
    return 0;
}
