"""Regenerates the golden pipeline fixtures (dataset, corpus, mock script).

Run from this directory: python3 make_fixtures.py
Output is deterministic; the committed files are what the tests pin.
"""
import csv
import json
import os
import random

rng = random.Random(7)

LESIONS = [
    ("atelectasis", "atelectasis"),
    ("consolidation", "consolidation"),
    ("enlarged_cardiac_silhouette", "enlarged cardiac silhouette"),
    ("pleural_effusion", "pleural effusion"),
    ("pleural_abnormality", "pleural abnormality"),
]

CORPUS = {
    "atelectasis": [
        "Atelectasis is the collapse or incomplete expansion of lung tissue. It often follows "
        "abdominal or thoracic surgery, prolonged bed rest, or airway obstruction by mucus plugs or tumours. "
        "Patients may report shortness of breath and show reduced oxygen saturation. Shallow breathing after "
        "anaesthesia and pain limits deep inspiration. Incentive spirometry and early mobilisation help re-expand the lung.",
        "On examination atelectasis produces diminished breath sounds over the affected segment and a shift of "
        "the trachea toward the collapsed side when the volume loss is large. Obesity and smoking increase the risk. "
        "Supplemental oxygen flow is titrated to saturation. Bronchoscopy is used when a central obstruction is suspected.",
    ],
    "consolidation": [
        "Consolidation means the alveolar air spaces are filled with fluid, pus, blood or cells. Bacterial pneumonia "
        "is the commonest cause. Patients present with fever, productive cough, pleuritic pain and tachypnoea. "
        "Crackles and bronchial breathing are heard over the involved lobe.",
        "Laboratory work for consolidation includes a white blood cell count, C-reactive protein and blood cultures. "
        "A raised neutrophil count supports a bacterial cause. Aspiration in patients with dysphagia and recent "
        "hospital admission raise the risk of resistant organisms.",
    ],
    "enlarged_cardiac_silhouette": [
        "An enlarged cardiac silhouette on a frontal chest radiograph suggests cardiomegaly or a pericardial collection. "
        "Common causes are heart failure, long standing hypertension, valvular disease and cardiomyopathy. Patients "
        "describe exertional breathlessness, orthopnoea and ankle swelling.",
        "Natriuretic peptide levels such as BNP help separate cardiac from other causes of breathlessness when the "
        "enlarged cardiac silhouette is seen. Echocardiography measures chamber size and ejection fraction. A history "
        "of heart failure or myocardial infarction is relevant.",
    ],
    "pleural_effusion": [
        "Pleural effusion is fluid accumulating between the visceral and parietal layers around the lung. Heart failure, "
        "pneumonia, malignancy and cirrhosis are frequent causes. Dyspnoea and pleuritic chest pain are the usual complaints.",
        "Stony dullness to percussion and absent breath sounds at the base point to pleural effusion. Thoracentesis with "
        "fluid protein and LDH measurement separates transudate from exudate. Prior heart failure favours a transudate.",
    ],
    "pleural_abnormality": [
        "A pleural abnormality covers thickening, plaques, calcification or masses of the pleura. Asbestos exposure is "
        "the classic cause of calcified plaques, often decades earlier in shipyard or construction work.",
        "Diffuse thickening may follow empyema, haemothorax or tuberculosis. Chest pain and weight loss with a pleural "
        "abnormality raise concern for mesothelioma. Occupational and smoking history should be recorded.",
    ],
}

# Per-lesion discovery answers.
DISCOVERY = {
    "atelectasis": [
        {"name": "recent_surgery", "kind": "boolean", "units": None},
        {"name": "oxygen_flow", "kind": "numeric", "units": "L/min"},
    ],
    "consolidation": [
        {"name": "fever", "kind": "boolean", "units": None},
        {"name": "white_blood_cell_count", "kind": "numeric", "units": "10^9/L"},
    ],
    "enlarged_cardiac_silhouette": [
        {"name": "bnp", "kind": "numeric", "units": "pg/mL"},
        {"name": "history_of_heart_failure", "kind": "boolean", "units": None},
    ],
    "pleural_effusion": [
        {"name": "dyspnea", "kind": "boolean", "units": None},
        {"name": "history_of_heart_failure", "kind": "boolean", "units": None},
    ],
    "pleural_abnormality": [
        {"name": "asbestos_exposure", "kind": "boolean", "units": None},
    ],
}

CURATION = [
    {"action": "add", "descriptor": {"name": "smoking_status", "kind": "categorical", "units": None}},
    {"action": "remove", "name": "bnp"},
    {"action": "rename", "from": "white_blood_cell_count", "to": "wbc_count"},
]

FINDINGS = {
    "atelectasis": "Linear opacity at the left base in keeping with subsegmental collapse.",
    "consolidation": "Dense airspace opacity in the right lower lobe with air bronchograms.",
    "enlarged_cardiac_silhouette": "The heart is enlarged.",
    "pleural_effusion": "Blunting of the costophrenic angle with a meniscus.",
    "pleural_abnormality": "Calcified plaques along the lateral chest wall.",
}

N = 60


def patients():
    rows = []
    for i in range(N):
        labels = {k: rng.random() < 0.3 for k, _ in LESIONS}
        # Guarantee at least six positives per lesion.
        for j, (k, _) in enumerate(LESIONS):
            if i % 10 == j:
                labels[k] = True
        acc = f"A{i + 1:03d}"
        found = [FINDINGS[k] for k, _ in LESIONS if labels[k]]
        report = f"Accession {acc}. " + (" ".join(found) if found else "No acute cardiopulmonary process.")
        sick = sum(labels.values())
        rows.append({
            "id": f"P{i + 1:03d}",
            "age": rng.randint(25, 90),
            "gender": rng.choice(["M", "F"]),
            "temperature": round(36.6 + 0.5 * labels["consolidation"] + rng.gauss(0, 0.4), 1),
            "heartrate": round(78 + 6 * sick + rng.gauss(0, 8)),
            "resprate": round(16 + 2 * sick + rng.gauss(0, 2)),
            "o2sat": round(min(100.0, 97 - 1.5 * sick + rng.gauss(0, 1.2))),
            "sbp": round(128 + rng.gauss(0, 15)),
            "dbp": round(76 + rng.gauss(0, 9)),
            "report": report,
            "acc": acc,
            "labels": labels,
        })
    return rows


def generated(p, strength):
    """One completion: values that track the labels with the given strength."""
    lab = p["labels"]

    def flag(lesion):
        truth = lab[lesion]
        return truth if rng.random() < strength else not truth

    return {
        "recent_surgery": flag("atelectasis"),
        "oxygen_flow": round((3.0 if flag("atelectasis") else 0.5) + rng.uniform(0, 1), 1),
        "fever": flag("consolidation"),
        "white_blood_cell_count": round((14.0 if flag("consolidation") else 8.0) + rng.gauss(0, 1.5), 1),
        "wbc_count": round((14.0 if flag("consolidation") else 8.0) + rng.gauss(0, 1.5), 1),
        "bnp": round((600 if flag("enlarged_cardiac_silhouette") else 80) + rng.uniform(0, 100)),
        "history_of_heart_failure": flag("enlarged_cardiac_silhouette"),
        "dyspnea": flag("pleural_effusion"),
        "asbestos_exposure": flag("pleural_abnormality"),
        "smoking_status": rng.choice(["current", "former"]) if flag("pleural_abnormality") else "never",
    }


def existing(p):
    return {
        "temperature": round(p["temperature"] + rng.gauss(0, 0.3), 1),
        "heartrate": round(p["heartrate"] + rng.gauss(0, 5)),
        "resprate": round(p["resprate"] + rng.gauss(0, 2)),
        "o2sat": round(min(100, p["o2sat"] + rng.gauss(0, 1))),
        "sbp": round(p["sbp"] + rng.gauss(0, 10)),
        "dbp": round(p["dbp"] + rng.gauss(0, 6)),
    }


def main():
    rows = patients()
    cols = ["id", "age", "gender", "temperature", "heartrate", "resprate", "o2sat", "sbp", "dbp", "report"]
    cols += [f"label_{k}" for k, _ in LESIONS]
    with open("dataset.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(cols)
        for p in rows:
            w.writerow([p[c] for c in cols[:10]] + [int(p["labels"][k]) for k, _ in LESIONS])

    for key, docs in CORPUS.items():
        d = os.path.join("corpus", key)
        os.makedirs(d, exist_ok=True)
        for i, text in enumerate(docs):
            with open(os.path.join(d, f"{i + 1:02d}.txt"), "w") as f:
                f.write(text + "\n")

    with open("curation.json", "w") as f:
        json.dump(CURATION, f, indent=2)
        f.write("\n")

    rules = []
    for key, _ in LESIONS:
        rules.append({"after": "Clinical knowledge:\n", "contains": f"[{key}] Q1",
                      "response": json.dumps(DISCOVERY[key])})
    for p in rows:
        rules.append({"after": "Estimate the patient's vital signs", "contains": f"Accession {p['acc']}.",
                      "response": json.dumps(existing(p))})
    for p in rows:
        rules.append({"after": "just taken.\n\nFeatures to fill in:", "contains": f"Accession {p['acc']}.",
                      "response": json.dumps(generated(p, 0.6))})
    for p in rows:
        rules.append({"after": "Radiology report:", "contains": f"Accession {p['acc']}.",
                      "response": json.dumps(generated(p, 0.9))})
    for key, name in LESIONS:
        rules.append({"after": "Question:", "contains": name,
                      "response": f"For {name} the key points are the history, the examination and targeted "
                                  f"laboratory tests [{key}]."})
    with open("mock_script.json", "w") as f:
        json.dump({"name": "golden", "rules": rules}, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
