// Copyright 2026 The rulekit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Prompt templates for extraction, verification and win-rate judging.
// Placeholders are written as {name}; see fill_template.

#pragma once

#include <map>
#include <string>
#include <string_view>

#include "rulekit/error.hpp"

namespace rulekit::prompts {

inline constexpr std::string_view kJustification =
    R"([Instruction]
You are tasked with analyzing two conversations between an AI assistant and a user. Based on the content, please provide a detailed explanation of why the user might have preferred the winning conversation.
Please consider aspects such as clarity, coherence, helpfulness, tone, and overall quality.

[Conversation with Assistant A]

{conversation_a}

[Conversation with Assistant B]

{conversation_b}

[Winning Conversation]: {winner}

[Your Explanation]
)";

inline constexpr std::string_view kRuleExtraction =
    R"([Instruction]
Based on the following reasoning about why conversation with assistant {winner} is better, extract any rule-like statements implied by the reasoning that indicate this preference. Rule-like statements should be able to be judged objectively and deterministically. Below are a few examples of rule-like statements:
Example 1:
- The assistant's responses should validate any assumptions made with sufficient context and examples.
Example 2:
- The assistant's responses should not simply restate information provided by the user as its answer.
Example 3:
- The assistant's responses should have a structure that satisfies the user's request.
Return the list as a JSON array of strings. Do not use ```json```, just output the JSON array directly. If there are no rule-like statements, return an empty JSON array.

[Reasoning]
{reasoning_chain}
)";

inline constexpr std::string_view kRuleMerging =
    R"([Instruction]
Below is a large list of rule-like statements regarding the behavior of an AI assistant. Some of these rules might be duplicates or very similar in meaning.
Please merge them so that there are no duplicates or rules with very similar meanings.
Return the merged list as a JSON array of strings. Do not use ```json```, just output the JSON array directly.

[Rules]
{rules_text}
)";

inline constexpr std::string_view kVerifierConcise =
    R"(You are an impartial judge. Determine whether the AI assistant's response in the following conversation both complies with the rule below and does so in a concise manner:

Rule:
{rule}

[Start of Conversation]
{conversation}

[End of Conversation]

[Analysis]
Base your judgment solely on whether (1) the response satisfies the rule and (2) the response does so in a concise manner.

Only respond with "[[Yes]]" if **both** conditions are fully satisfied. If either condition is not met, respond with "[[No]]". If the rule is not applicable to the task, treat it as satisfied.

Respond with one of the following options, and nothing else: "[[Yes]]" or "[[No]]".
)";

inline constexpr std::string_view kVerifier =
    R"([Instruction]
Please act as an impartial judge and evaluate whether the responses provided by an AI assistant in the following conversation satisfy the following rule:
{rule}
Be as objective as possible when evaluating the rule and do not evaluate other characteristics of the response. If the rule is not applicable for this task, treat it as if the rule is satisfied. You must provide your answer by strictly outputting either one of the following two options: "[[Yes]]" or "[[No]]" and nothing else.

[Start of Conversation]
{conversation}

[End of Conversation]
)";

inline constexpr std::string_view kWinRateRanking =
    R"(I want you to create a leaderboard of different large-language models. To do so, I will give you the instructions (prompts) given to the models, and the responses of two models. Please rank the models based on which responses would be preferred by humans. All inputs and outputs should be python dictionaries.

Here is the prompt:
{
    "instruction": """{instruction}"""
}

Here are the outputs of the models:
[
    {
        "model": "model_1",
        "answer": """{output_1}"""
    },
    {
        "model": "model_2",
        "answer": """{output_2}"""
    }
]

Now please rank the models by the quality of their answers, so that the model with rank 1 has the best output. Then return a list of the model names and ranks, i.e., produce the following output:
[
    {'model': <model-name>, 'rank': <model-rank>},
    {'model': <model-name>, 'rank': <model-rank>}
]

Your response must be a valid Python dictionary and should contain nothing else because we will directly execute it in Python. Please provide the ranking that the majority of humans would give.
)";

/// Substitutes {name} placeholders in a single left-to-right pass, so text
/// inserted for one placeholder is never rescanned. Braces that do not form
/// a known placeholder are copied through unchanged. Throws ArgumentError if
/// a named value is never used.
inline std::string fill_template(
    std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::map<std::string, bool> used;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        const std::string name(tmpl.substr(i + 1, close - i - 1));
        auto it = values.find(name);
        if (it != values.end()) {
          out += it->second;
          used[name] = true;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  for (const auto& [name, _] : values)
    if (!used[name])
      throw ArgumentError("template has no placeholder {" + name + "}");
  return out;
}

}  // namespace rulekit::prompts
