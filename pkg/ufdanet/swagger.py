from flask_restx import Api


def configure_swagger(app):
    """
    Configura o Swagger/OpenAPI para documentação da API de pontuação
    """

    api = Api(
        app,
        version='1.0.0',
        title='UFDANet - API de Anti-Spoofing Facial',
        description='''
        ## 🛡️ Detecção de ataques de apresentação (one-class)

        API para pontuar imagens de rosto com um checkpoint treinado:
        - 📷 Upload da imagem + caixa do rosto `(x, y, w, h)`
        - 📊 Score de liveness em [0, 1]
        - ✅ Decisão `live` se `score >= threshold`

        ### 📚 Documentação

        - **Swagger UI**: Documentação interativa (esta página)
        - **OpenAPI JSON**: Especificação em `/swagger.json`
        ''',
        doc='/docs',
        prefix='/api'
    )

    return api
