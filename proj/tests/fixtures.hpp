#pragma once

// Hand-built tasks with known answers.

#include <memory>

#include "avrl/world.hpp"

namespace avrl::fixture {

// audio:  knock[0,2) bark[2,5) siren[6,9) bell[10,12)
// visual: dog[2,4) cat[5,8) lamp[9,12)
// "Which sound is heard right after the bark?" -> siren (B)
inline GeneratedTask next_audio_task() {
  GeneratedTask t;
  t.id = "fx-audio";
  t.content.duration = 12.0;
  t.content.audio_track = {{{0, 2}, "knock"}, {{2, 5}, "bark"}, {{6, 9}, "siren"}, {{10, 12}, "bell"}};
  t.content.visual_track = {{{2, 4}, "dog"}, {{5, 8}, "cat"}, {{9, 12}, "lamp"}};
  t.kind = TaskTemplate::kNextAudio;
  t.cue = "bark";
  t.question = "Which sound is heard right after the bark?";
  t.options = {"bell", "siren", "knock", "drip"};
  t.answer_key = 'B';
  t.evidence = {{{2, 5}, "bark"}, {{6, 9}, "siren"}};
  t.ground_truth = SegmentSet{{2, 5}, {6, 9}};
  t.requirement = ModalityRequirement::kAudio;
  return t;
}

// visual: car[0,3) dog[3,6) tree[8,10) cup[12,14)
// audio:  wind[0,4) bell[7,11)
// "Which object is on screen while the bell rings?" -> tree (C), needs both tracks.
inline GeneratedTask cooccurrence_task() {
  GeneratedTask t;
  t.id = "fx-av";
  t.content.duration = 14.0;
  t.content.visual_track = {{{0, 3}, "car"}, {{3, 6}, "dog"}, {{8, 10}, "tree"}, {{12, 14}, "cup"}};
  t.content.audio_track = {{{0, 4}, "wind"}, {{7, 11}, "bell"}};
  t.kind = TaskTemplate::kCooccurrence;
  t.cue = "bell";
  t.question = "Which object is on screen while the bell rings?";
  t.options = {"car", "dog", "tree", "cup"};
  t.answer_key = 'C';
  t.evidence = {{{7, 11}, "bell"}, {{8, 10}, "tree"}};
  t.ground_truth = SegmentSet{{7, 11}};
  t.requirement = ModalityRequirement::kAudioVisual;
  return t;
}

inline std::shared_ptr<const ContentStore> store() {
  auto s = std::make_shared<ContentStore>();
  s->add(next_audio_task());
  s->add(cooccurrence_task());
  return s;
}

}  // namespace avrl::fixture
