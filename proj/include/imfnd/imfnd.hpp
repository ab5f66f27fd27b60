#pragma once

// Umbrella header for the IMFND library.

#include "imfnd/classifier.hpp"
#include "imfnd/config.hpp"
#include "imfnd/datasets.hpp"
#include "imfnd/digest.hpp"
#include "imfnd/encoders.hpp"
#include "imfnd/errors.hpp"
#include "imfnd/evaluation.hpp"
#include "imfnd/fusion.hpp"
#include "imfnd/image_meta.hpp"
#include "imfnd/lvlm_client.hpp"
#include "imfnd/prompting.hpp"
#include "imfnd/remote_client.hpp"
#include "imfnd/report_io.hpp"
#include "imfnd/rng.hpp"
#include "imfnd/tensor.hpp"
#include "imfnd/version.hpp"
