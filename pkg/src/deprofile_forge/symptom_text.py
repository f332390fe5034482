"""Natural-language realizations of each checklist attribute.

Each entry is ``(positive, negative)``: how the simulated patient experiences
the attribute when it is present, and the normal condition to assert when
it is explicitly absent.
"""

DESCRIPTIONS: dict[str, tuple[str, str]] = {
    "sleep-light sleep": (
        "Your sleep is light; small noises wake you up.",
        "You sleep soundly and are not easily woken.",
    ),
    "sleep-difficulty falling asleep": (
        "It takes you a long time to fall asleep; you toss and turn in bed.",
        "You fall asleep without much trouble.",
    ),
    "sleep-frequent dreaming": (
        "You dream a lot and wake up feeling as if you had not rested.",
        "You do not dream unusually often and wake up rested.",
    ),
    "sleep-early awakening": (
        "You wake up earlier than you want and cannot get back to sleep.",
        "You do not wake up too early.",
    ),
    "sleep-sleep disturbance": (
        "Your sleep has been disturbed overall.",
        "Your overall sleep quality is fine.",
    ),
    "sleep-reduced sleep duration": (
        "You sleep noticeably fewer hours than you used to.",
        "You get your usual number of hours of sleep.",
    ),
    "appetite-binge eating": (
        "When your mood is bad you sometimes eat a lot without being able to stop.",
        "You do not binge eat.",
    ),
    "appetite-significant weight change": (
        "Your weight has changed noticeably recently.",
        "Your weight has stayed about the same.",
    ),
    "appetite-loss of appetite": (
        "You have lost your appetite, even for foods you used to like.",
        "Your appetite is normal.",
    ),
    "appetite-appetite disturbance": (
        "Your eating has been irregular and different from before.",
        "Your eating habits have not changed.",
    ),
    "suicide-hopelessness": (
        "You feel hopeless about the future.",
        "You still have some hope for the future.",
    ),
    "suicide-suicidal ideation": (
        "At your worst moments you have had thoughts of ending your life.",
        "You have not had thoughts of ending your life.",
    ),
    "suicide-low self-worth": (
        "You often feel useless or like a burden to others.",
        "You do not feel worthless.",
    ),
    "suicide-self-blame": (
        "You often blame yourself and feel things are your fault.",
        "You do not blame yourself excessively.",
    ),
    "suicide-self-harm tendency": (
        "You have hurt yourself to release distress.",
        "You have never hurt yourself on purpose.",
    ),
    "suicide-suicide attempt": (
        "You have made a suicide attempt in the past.",
        "You have never attempted suicide.",
    ),
    "screening-mania": (
        "You have had periods of unusually high energy, racing thoughts and little need for sleep.",
        "You have never had periods of unusually high energy or racing thoughts.",
    ),
    "screening-family history": (
        "A close family member has had similar emotional problems.",
        "No one in your family has had similar emotional problems.",
    ),
    "somatic-somatic discomfort": (
        "You have physical discomfort such as headaches, stomachaches or palpitations.",
        "You have no notable physical discomfort.",
    ),
    "somatic-psychomotor agitation": (
        "You feel restless and need to move around to calm down.",
        "You do not feel physically restless.",
    ),
    "somatic-psychomotor retardation": (
        "You feel slowed down; speaking, walking and thinking take more effort than before.",
        "You do not feel slowed down.",
    ),
    "emotion-depressed mood": (
        "Your mood is low and you find it hard to feel happy.",
        "Your mood is not persistently low.",
    ),
    "emotion-depressed mood over two weeks": (
        "The low mood has lasted for more than two weeks.",
        "Any low mood has not lasted longer than two weeks.",
    ),
    "emotion-diurnal variation": (
        "Your mood is noticeably worse at a particular time of day.",
        "Your mood does not change much between morning and evening.",
    ),
    "interest-loss of interest": (
        "You have lost interest in things you used to enjoy.",
        "You are still interested in your usual activities.",
    ),
    "interest-scope all activities": (
        "The loss of interest covers almost everything, not just a few things.",
        "Your loss of interest, if any, is limited to a few things.",
    ),
    "interest-emotional blunting": (
        "You feel numb and react little to events or to care from family.",
        "You still feel things when events happen around you.",
    ),
    "interest-cause": (
        "You can point to what made you lose interest.",
        "You cannot name a particular cause for how you feel about your activities.",
    ),
    "interest-loss of interest over two weeks": (
        "The loss of interest has lasted more than two weeks.",
        "Any loss of interest has not lasted more than two weeks.",
    ),
    "interest-scope past hobbies": (
        "Thinking about your past hobbies no longer brings you pleasure.",
        "You still enjoy thinking about your past hobbies.",
    ),
    "social functioning-difficulty in daily life": (
        "Daily chores such as bathing, eating or cleaning feel difficult.",
        "You manage daily chores without difficulty.",
    ),
    "social functioning-difficulty in study or work": (
        "Your work or study efficiency has dropped.",
        "Your work or study is not affected.",
    ),
    "social functioning-avoid social contact": (
        "You avoid people and social gatherings.",
        "You do not avoid social contact.",
    ),
    "social functioning-avoid support from family or friends": (
        "You hide your feelings from family and friends instead of asking for support.",
        "You are willing to tell family or friends when you are unhappy.",
    ),
    "mental state-fatigue": (
        "You feel physically exhausted even without doing much.",
        "You do not feel unusually tired.",
    ),
    "mental state-memory decline": (
        "Your memory has worsened; you forget what you just said or where you put things.",
        "Your memory is as good as before.",
    ),
    "mental state-lack of confidence": (
        "You lack confidence when making decisions or handling matters.",
        "You feel reasonably confident handling matters.",
    ),
    "mental state-indecisiveness": (
        "You struggle to decide even simple things.",
        "You can make simple decisions easily.",
    ),
    "mental state-inattention": (
        "You find it hard to concentrate; your mind wanders easily.",
        "You can concentrate normally.",
    ),
}
