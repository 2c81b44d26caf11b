#pragma once

// Judge prompt templates. Placeholders: {input}/{prompt} for the user
// instruction, {generation} and {generation2} for the two responses,
// {user instruction} in the category-assignment prompt. Copies of these
// templates live under templates/ for operators to inspect or override; a
// unit test guards against drift.

#include <array>
#include <string>
#include <string_view>

namespace prefgen {

// Pairwise judge with a binary [[A]]/[[B]] verdict.
inline constexpr std::string_view kPairwiseJudgeTemplate =
    "Please act as an impartial judge and evaluate the quality of the responses provided by "
    "two AI assistants to the user question displayed below. You should choose the assistant "
    "that follows the user's instructions and answers the user's question better. Your "
    "evaluation should consider factors such as the helpfulness, relevance, accuracy, depth, "
    "creativity, and level of detail of their responses. Begin your evaluation by comparing "
    "the two responses and provide a short explanation. Avoid any position biases and ensure "
    "that the order in which the responses were presented does not influence your decision. "
    "Do not allow the length of the responses to influence your evaluation. Do not favor "
    "certain names of the assistants. Be as objective as possible. After providing your "
    "explanation, output your final verdict by strictly following this format: \"[[A]]\" if "
    "assistant A is better, \"[[B]]\" if assistant B is better.\n"
    "\n"
    "[User Question]\n"
    "{input}\n"
    "\n"
    "[The Start of Assistant A's Answer]\n"
    "{generation}\n"
    "[The End of Assistant A's Answer]\n"
    "\n"
    "[The Start of Assistant B's Answer]\n"
    "{generation2}\n"
    "[The End of Assistant B's Answer]";

// Pairwise judge with a 5-way verdict, system part.
inline constexpr std::string_view kGradedJudgeSystemTemplate =
    "Please act as an impartial judge and evaluate the quality of the responses provided by "
    "two AI assistants to the user prompt displayed below. You will be given assistant A's "
    "answer and assistant B's answer. Your job is to evaluate which assistant's answer is "
    "better.\n"
    "\n"
    "Begin your evaluation by generating your own answer to the prompt. You must provide "
    "your answers before judging any answers.\n"
    "\n"
    "When evaluating the assistants' answers, compare both assistants' answers with your "
    "answer. You must identify and correct any mistakes or inaccurate information.\n"
    "\n"
    "Then consider if the assistant's answers are helpful, relevant, and concise. Helpful "
    "means the answer correctly responds to the prompt or follows the instructions. Note "
    "when user prompt has any ambiguity or more than one interpretation, it is more helpful "
    "and appropriate to ask for clarifications or more information from the user than "
    "providing an answer based on assumptions. Relevant means all parts of the response "
    "closely connect or are appropriate to what is being asked. Concise means the response "
    "is clear and not verbose or excessive.\n"
    "\n"
    "Then consider the creativity and novelty of the assistant's answers when needed. "
    "Finally, identify any missing important information in the assistants' answers that "
    "would be beneficial to include when responding to the user prompt.\n"
    "\n"
    "After providing your explanation, you must output only one of the following choices as "
    "your final verdict with a label:\n"
    "\n"
    "1. Assistant A is significantly better: [[A>>B]]\n"
    "2. Assistant A is slightly better: [[A>B]]\n"
    "3. Tie, relatively the same: [[A=B]]\n"
    "4. Assistant B is slightly better: [[B>A]]\n"
    "5. Assistant B is significantly better: [[B>>A]]\n"
    "\n"
    "Example output: \"My final verdict is tie: [[A=B]]\".";

// Pairwise judge with a 5-way verdict, user part.
inline constexpr std::string_view kGradedJudgeUserTemplate =
    "<|User Prompt|>\n"
    "{prompt}\n"
    "\n"
    "<|The Start of Assistant A's Answer|>\n"
    "{generation}\n"
    "<|The End of Assistant A's Answer|>\n"
    "\n"
    "<|The Start of Assistant B's Answer|>\n"
    "{generation2}\n"
    "<|The End of Assistant B's Answer|>";

inline constexpr std::array<std::string_view, 21> kCategoryNames = {
    "General Knowledge",
    "Math and Calculations",
    "Programming and Coding",
    "Reasoning and Problem-Solving",
    "Creative Writing",
    "Content Writing",
    "Art and Design",
    "Language and Translation",
    "Research and Analysis",
    "Conversational Dialogue",
    "Data Analysis and Visualization",
    "Business and Finance",
    "Education and Learning",
    "Science and Technology",
    "Health and Wellness",
    "Personal Development",
    "Entertainment and Humor",
    "Travel and Leisure",
    "Marketing and Sales",
    "Game Development",
    "Miscellaneous",
};

inline constexpr std::string_view kAssignCategoryTemplate =
    "Below is an instruction that I would like you to analyze:\n"
    "\n"
    "<instruction>\n"
    "{user instruction}\n"
    "</instruction>\n"
    "\n"
    "Categorize the instruction above into one of the following categories:\n"
    "General Knowledge\n"
    "Math and Calculations\n"
    "Programming and Coding\n"
    "Reasoning and Problem-Solving\n"
    "Creative Writing\n"
    "Content Writing\n"
    "Art and Design\n"
    "Language and Translation\n"
    "Research and Analysis\n"
    "Conversational Dialogue\n"
    "Data Analysis and Visualization\n"
    "Business and Finance\n"
    "Education and Learning\n"
    "Science and Technology\n"
    "Health and Wellness\n"
    "Personal Development\n"
    "Entertainment and Humor\n"
    "Travel and Leisure\n"
    "Marketing and Sales\n"
    "Game Development\n"
    "Miscellaneous\n"
    "\n"
    "Be sure to provide the exact category name without any additional text.";

inline std::string fill_placeholder(std::string text, std::string_view placeholder,
                                    std::string_view value) {
    size_t pos = text.find(placeholder);
    if (pos != std::string::npos) text.replace(pos, placeholder.size(), value);
    return text;
}

inline std::string fill_pairwise_judge_prompt(std::string_view tmpl, const std::string& instruction,
                                              const std::string& first, const std::string& second,
                                              std::string_view instruction_slot) {
    std::string out = fill_placeholder(std::string(tmpl), instruction_slot, instruction);
    out = fill_placeholder(std::move(out), "{generation}", first);
    out = fill_placeholder(std::move(out), "{generation2}", second);
    return out;
}

} // namespace prefgen
